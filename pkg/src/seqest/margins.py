"""Interval shape functions: stopping margins, reporting margins, and slope.

A margin shape maps an estimate ``z`` and a precision ``eps > 0`` to the
endpoints of the target random interval.  Four built-in shapes cover the
classic precision requirements:

* absolute:        |estimate - mu| < eps
* relative:        |estimate - mu| < eps * |mu|        (positive means)
* mixed(rho):      |estimate - mu| < rho*eps  OR  < eps * |mu|
* multiplicative:  (1 - eps) * estimate < mu < (1 + eps) * estimate

Every shape carries a slope ``kappa(mu) > 0``, the common limit of
``(z - lower)/eps`` and ``(upper - z)/eps`` as ``z -> mu`` and ``eps -> 0``.
The slope drives the fixed-size baseline and all asymptotic predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import DomainError

_FULL_LINE = (-math.inf, math.inf)
_POSITIVE = (0.0, math.inf)


@dataclass(frozen=True)
class MarginShape:
    """A pair of stopping margins plus optional distinct reporting margins.

    ``lower_fn``/``upper_fn`` evaluate the stopping interval endpoints
    L(z, eps) and U(z, eps).  ``report_lower_fn``/``report_upper_fn`` default
    to the stopping pair and may differ for a custom shape as long as they
    share the same slope.  ``mean_domain`` is the open interval of admissible
    means; ``z_positive`` marks shapes whose endpoint formulas require z > 0.
    """

    kind: str
    lower_fn: Callable[[float, float], float]
    upper_fn: Callable[[float, float], float]
    kappa_fn: Callable[[float], float]
    mean_domain: tuple[float, float] = _FULL_LINE
    report_lower_fn: Optional[Callable[[float, float], float]] = None
    report_upper_fn: Optional[Callable[[float, float], float]] = None
    params: dict = field(default_factory=dict)
    max_epsilon: float = math.inf
    z_positive: bool = False

    def contains_mean(self, mu: float) -> bool:
        lo, hi = self.mean_domain
        return lo < mu < hi

    def _check_args(self, z: float, eps: float) -> None:
        if not eps > 0.0:
            raise DomainError(f"eps must be positive, got {eps}")
        if eps >= self.max_epsilon:
            raise DomainError(
                f"{self.kind} shape requires eps < {self.max_epsilon}, got {eps}"
            )
        if self.z_positive and z <= 0.0:
            raise DomainError(f"{self.kind} shape requires z > 0, got {z}")


def margin_lower(shape: MarginShape, z: float, eps: float) -> float:
    """Lower stopping-margin endpoint L(z, eps)."""
    shape._check_args(z, eps)
    return shape.lower_fn(z, eps)


def margin_upper(shape: MarginShape, z: float, eps: float) -> float:
    """Upper stopping-margin endpoint U(z, eps)."""
    shape._check_args(z, eps)
    return shape.upper_fn(z, eps)


def report_margins(shape: MarginShape, z: float, eps: float) -> tuple[float, float]:
    """Reporting interval endpoints; identical to the stopping pair by default."""
    shape._check_args(z, eps)
    lo_fn = shape.report_lower_fn or shape.lower_fn
    hi_fn = shape.report_upper_fn or shape.upper_fn
    return lo_fn(z, eps), hi_fn(z, eps)


def kappa(shape: MarginShape, mu: float) -> float:
    """Common margin slope at mu; strictly positive on the mean domain."""
    if not shape.contains_mean(mu):
        raise DomainError(f"mu={mu} outside mean domain {shape.mean_domain}")
    k = shape.kappa_fn(mu)
    if not k > 0.0:
        raise DomainError(f"kappa({mu}) = {k} is not positive")
    return k


# ---------------------------------------------------------------------------
# Built-in shapes
# ---------------------------------------------------------------------------

def _abs_lower(z: float, eps: float) -> float:
    return z - eps


def _abs_upper(z: float, eps: float) -> float:
    return z + eps


def _kappa_one(mu: float) -> float:
    return 1.0


def _kappa_abs(mu: float) -> float:
    return abs(mu)


def absolute_shape() -> MarginShape:
    return MarginShape(
        kind="absolute",
        lower_fn=_abs_lower,
        upper_fn=_abs_upper,
        kappa_fn=_kappa_one,
    )


def _rel_lower(z: float, eps: float) -> float:
    return z / (1.0 + eps)


def _rel_upper(z: float, eps: float) -> float:
    return z / (1.0 - eps)


def relative_shape() -> MarginShape:
    # Exact inversion of |z - mu| < eps*mu on positive means; needs eps < 1.
    return MarginShape(
        kind="relative",
        lower_fn=_rel_lower,
        upper_fn=_rel_upper,
        kappa_fn=_kappa_abs,
        mean_domain=_POSITIVE,
        max_epsilon=1.0,
        z_positive=True,
    )


def _mixed_bounds(z: float, eps: float, rho: float) -> tuple[float, float]:
    # Union of the absolute-(rho*eps) interval and the relative-eps interval.
    # Both contain z whenever the relative piece is nonempty (z != 0), so the
    # union is again an interval.
    abs_lo, abs_hi = z - rho * eps, z + rho * eps
    if z > 0.0:
        rel_lo, rel_hi = z / (1.0 + eps), z / (1.0 - eps)
    elif z < 0.0:
        rel_lo, rel_hi = z / (1.0 - eps), z / (1.0 + eps)
    else:
        return abs_lo, abs_hi
    return min(abs_lo, rel_lo), max(abs_hi, rel_hi)


@dataclass(frozen=True)
class _MixedLower:
    rho: float

    def __call__(self, z: float, eps: float) -> float:
        return _mixed_bounds(z, eps, self.rho)[0]


@dataclass(frozen=True)
class _MixedUpper:
    rho: float

    def __call__(self, z: float, eps: float) -> float:
        return _mixed_bounds(z, eps, self.rho)[1]


@dataclass(frozen=True)
class _MixedKappa:
    rho: float

    def __call__(self, mu: float) -> float:
        return max(self.rho, abs(mu))


def mixed_shape(rho: float) -> MarginShape:
    if not 0.0 < rho < 1.0:
        raise DomainError(f"mixed shape constant rho must be in (0,1), got {rho}")
    return MarginShape(
        kind="mixed",
        lower_fn=_MixedLower(rho),
        upper_fn=_MixedUpper(rho),
        kappa_fn=_MixedKappa(rho),
        params={"rho": rho},
        max_epsilon=1.0,
    )


def _mul_lower(z: float, eps: float) -> float:
    return (1.0 - eps) * z


def _mul_upper(z: float, eps: float) -> float:
    return (1.0 + eps) * z


def multiplicative_shape() -> MarginShape:
    return MarginShape(
        kind="multiplicative",
        lower_fn=_mul_lower,
        upper_fn=_mul_upper,
        kappa_fn=_kappa_abs,
        mean_domain=_POSITIVE,
        max_epsilon=1.0,
        z_positive=True,
    )


def custom_shape(
    lower_fn: Callable[[float, float], float],
    upper_fn: Callable[[float, float], float],
    kappa_fn: Callable[[float], float],
    mean_domain: tuple[float, float] = _FULL_LINE,
    report_lower_fn: Optional[Callable[[float, float], float]] = None,
    report_upper_fn: Optional[Callable[[float, float], float]] = None,
    max_epsilon: float = math.inf,
) -> MarginShape:
    """User-supplied shape; reporting margins must share the stopping slope."""
    return MarginShape(
        kind="custom",
        lower_fn=lower_fn,
        upper_fn=upper_fn,
        kappa_fn=kappa_fn,
        mean_domain=mean_domain,
        report_lower_fn=report_lower_fn,
        report_upper_fn=report_upper_fn,
        max_epsilon=max_epsilon,
    )


_BUILTIN = {
    "absolute": absolute_shape,
    "relative": relative_shape,
    "multiplicative": multiplicative_shape,
}


def shape_from_config(name: str, rho: float | None = None) -> MarginShape:
    """Build a shape from config keys (shape name plus mixed.rho)."""
    if name == "mixed":
        if rho is None:
            raise DomainError("mixed shape requires mixed.rho")
        return mixed_shape(rho)
    try:
        return _BUILTIN[name]()
    except KeyError:
        raise DomainError(f"unknown shape {name!r}") from None


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass
class ShapeReport:
    """Numeric check of the ordering and slope properties of a shape."""

    kind: str
    mu: float
    eps_grid: tuple[float, ...]
    max_order_violation: float
    min_strict_margin: float
    slopes_lower: tuple[float, ...]
    slopes_upper: tuple[float, ...]
    slope_devs: tuple[float, ...]
    kappa_value: float
    flagged: bool

    def summary(self) -> str:
        status = "FLAGGED" if self.flagged else "ok"
        return (
            f"shape={self.kind} mu={self.mu:g} {status}: "
            f"order_violation={self.max_order_violation:.3g} "
            f"strict_margin={self.min_strict_margin:.3g} "
            f"max_slope_dev={max(self.slope_devs):.3g}"
        )


def check_shape(shape: MarginShape, mu: float, eps_grid) -> ShapeReport:
    """Evaluate ordering L <= z <= U and slope convergence on an eps grid.

    The grid must be strictly decreasing toward 0.  Ordering is probed at
    z values shrinking toward mu alongside eps.  Diagnostics only; never
    raises for a violating shape.
    """
    grid = tuple(eps_grid)
    if not grid or any(e <= 0 for e in grid):
        raise DomainError("eps_grid must be a nonempty positive sequence")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise DomainError("eps_grid must be strictly decreasing")

    kap = shape.kappa_fn(mu)
    order_viol = 0.0
    strict_margin = math.inf  # min over grid of min(mu - L, U - mu); must stay > 0
    slopes_lo, slopes_hi, devs = [], [], []
    for eps in grid:
        # probe points approaching mu at the eps scale
        for z in (mu, mu + 0.5 * eps, mu - 0.5 * eps):
            if shape.z_positive and z <= 0.0:
                continue
            lo = shape.lower_fn(z, eps)
            hi = shape.upper_fn(z, eps)
            order_viol = max(order_viol, lo - z, z - hi)
        lo_mu = shape.lower_fn(mu, eps)
        hi_mu = shape.upper_fn(mu, eps)
        strict_margin = min(strict_margin, mu - lo_mu, hi_mu - mu)
        s_lo = (mu - lo_mu) / eps
        s_hi = (hi_mu - mu) / eps
        slopes_lo.append(s_lo)
        slopes_hi.append(s_hi)
        devs.append(max(abs(s_lo - kap), abs(s_hi - kap)))

    flagged = order_viol > 0.0 or strict_margin <= 0.0 or not (
        devs[-1] <= devs[0] + 1e-12 or devs[-1] < 1e-9
    )
    return ShapeReport(
        kind=shape.kind,
        mu=mu,
        eps_grid=grid,
        max_order_violation=order_viol,
        min_strict_margin=strict_margin,
        slopes_lower=tuple(slopes_lo),
        slopes_upper=tuple(slopes_hi),
        slope_devs=tuple(devs),
        kappa_value=kap,
        flagged=flagged,
    )
