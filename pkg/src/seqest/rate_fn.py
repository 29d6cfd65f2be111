"""Large-deviation rate function of the sample mean.

``rate(model, z, theta)`` is the infimum over s of
``s * (theta - z) + psi(s, theta)``, with value -inf when theta lies outside
the mean domain.  It is nonpositive, zero exactly at z = theta, and behaves
like ``-(z - theta)^2 / (2 V(theta))`` near the diagonal.  Closed forms are
KL-type divergences for the built-in families; a bracketed golden-section
minimizer provides an independent numeric route for cross-checking and for
families without a closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import DomainError, NonConvergenceError, UnsupportedOperationError
from .models import MeanModel, cumulant, cumulant_domain, variance

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RateEval:
    """Result of a rate evaluation: value, minimizer when known, method tag."""

    value: float
    minimizer: Optional[float]
    method: str
    iterations: int = 0


def rate(model: MeanModel, z: float, theta: float) -> float:
    """Closed-form rate; -inf for theta outside the mean domain.

    Sample means at the boundary of discrete supports (Y_n in {0, 1} for
    Bernoulli, 0 for Poisson) use the finite one-sided KL limits so the
    stopping comparisons remain well defined.
    """
    if not model.contains_mean(theta):
        return -math.inf
    fam = model.family
    if fam == "bernoulli":
        zc = min(1.0, max(0.0, z))
        if zc <= 0.0:
            return math.log(1.0 - theta)
        if zc >= 1.0:
            return math.log(theta)
        return -(zc * math.log(zc / theta)
                 + (1.0 - zc) * math.log((1.0 - zc) / (1.0 - theta)))
    if fam == "poisson":
        if z <= 0.0:
            return -theta
        return -(z * math.log(z / theta) - z + theta)
    if fam == "exponential":
        if z <= 0.0:
            return -math.inf
        r = z / theta
        return -(r - 1.0 - math.log(r))
    if fam == "normal":
        return -((z - theta) ** 2) / (2.0 * model.sigma2)
    raise UnsupportedOperationError(f"no rate function for family {fam!r}")


def _golden_section(f: Callable[[float], float], lo: float, hi: float,
                    tol_x: float, max_iter: int) -> tuple[float, float, int]:
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    it = 0
    while hi - lo > tol_x and it < max_iter:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
        it += 1
    if fc <= fd:
        return c, fc, it
    return d, fd, it


def rate_numeric(model: MeanModel, z: float, theta: float,
                 tol: float = 1e-9, max_iter: int = 400) -> RateEval:
    """Minimize the convex objective g(s) by golden section.

    The bracket starts at [max(a + h, -50), min(b - h, 50)] with relative
    domain offsets h and expands when the minimum sits on a non-domain edge
    and is still improving; the infimum may genuinely be approached at an
    unbounded edge, in which case the converged edge value is returned.
    """
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    model.require_mean(theta)
    a, b = cumulant_domain(model, theta)

    def g(s: float) -> float:
        return s * (theta - z) + cumulant(model, s, theta)

    ha = 1e-8 * max(1.0, abs(a)) if math.isfinite(a) else 0.0
    hb = 1e-8 * max(1.0, abs(b)) if math.isfinite(b) else 0.0
    span = 50.0
    tol_x = max(1e-12, 0.01 * math.sqrt(tol))
    prev_val = None
    total_it = 0
    for _ in range(10):
        lo = max(a + ha, -span) if math.isfinite(a) else -span
        hi = min(b - hb, span) if math.isfinite(b) else span
        if not lo < hi:
            raise NonConvergenceError(
                f"degenerate cumulant domain bracket [{lo}, {hi}]"
            )
        s_star, val, it = _golden_section(g, lo, hi, tol_x, max_iter)
        total_it += it
        at_lo = (s_star - lo) < 2 * tol_x and lo == -span
        at_hi = (hi - s_star) < 2 * tol_x and hi == span
        if not (at_lo or at_hi):
            return RateEval(min(val, 0.0), s_star, "numeric", total_it)
        if prev_val is not None and abs(prev_val - val) <= 0.1 * tol:
            return RateEval(min(val, 0.0), s_star, "numeric", total_it)
        prev_val = val
        span *= 32.0
    raise NonConvergenceError(
        f"rate minimization did not settle for z={z}, theta={theta}"
    )


def quad_ratio(model: MeanModel, z: float, theta: float) -> float:
    """-2 V(theta) M(z, theta) / (theta - z)^2; tends to 1 as z -> theta."""
    model.require_mean(theta)
    gap = theta - z
    if abs(gap) < 1e-12 * max(1.0, abs(theta)):
        raise DomainError(
            f"|z - theta| = {abs(gap):g} is below the degeneracy threshold"
        )
    return -2.0 * variance(model, theta) * rate(model, z, theta) / (gap * gap)
