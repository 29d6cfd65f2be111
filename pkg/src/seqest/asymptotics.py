"""Closed-form diagnostics and predictions for the stopping schemes.

Provides the standard normal CDF/quantile with tail accuracy, the fixed-size
baseline N = nu Z^2 / (kappa eps)^2, the stage diagnostics Lambda_ell and the
critical index, the predicted coverage and efficiency of a multistage scheme,
the concentration tail bounds used as empirical oracles, and the plug-in
coverage decomposition estimators Pbar / Punder / Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import DomainError, HorizonError
from .margins import MarginShape, kappa

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def normal_cdf(x: float) -> float:
    """Standard normal distribution function via the complementary error
    function, accurate in both tails."""
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def _quantile_initial(p: float) -> float:
    # Abramowitz & Stegun 26.2.23 rational approximation, |error| < 4.5e-4.
    def approx(t: float) -> float:
        num = (0.010328 * t + 0.802853) * t + 2.515517
        den = ((0.001308 * t + 0.189269) * t + 1.432788) * t + 1.0
        return t - num / den

    if p < 0.5:
        return -approx(math.sqrt(-2.0 * math.log(p)))
    return approx(math.sqrt(-2.0 * math.log(1.0 - p)))


def normal_quantile(p: float) -> float:
    """Inverse of normal_cdf; rational initial guess plus Newton polish.

    Round trip |normal_cdf(normal_quantile(p)) - p| stays below 1e-12 across
    p in [1e-8, 1 - 1e-8].
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile argument must be in (0, 1), got {p}")
    x = _quantile_initial(p)
    for _ in range(3):
        err = normal_cdf(x) - p
        d = normal_pdf(x)
        if d <= 0.0:
            break
        step = err / d
        x -= step
        if abs(step) < 1e-15 * max(1.0, abs(x)):
            break
    return x


def fixed_size(eps: float, delta: float, mu: float, nu: float,
               shape: MarginShape) -> float:
    """Fixed-sample baseline N = nu Z^2 / (kappa(mu) eps)^2."""
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must be in (0, 1), got {delta}")
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    z = normal_quantile(1.0 - delta / 2.0)
    k = kappa(shape, mu)
    return nu * z * z / (k * eps) ** 2


def lambda_table(kap: float, nu: float, c_fn: Callable[[int], float],
                 l_max: int) -> tuple[float, ...]:
    """Lambda_ell = kappa^2 C_ell / nu for ell = 1..l_max."""
    if not (kap > 0 and nu > 0 and l_max >= 1):
        raise DomainError("lambda_table requires kap > 0, nu > 0, l_max >= 1")
    return tuple(kap * kap * c_fn(ell) / nu for ell in range(1, l_max + 1))


def critical_index(kap: float, nu: float, c_fn: Callable[[int], float],
                   l_max: int = 64) -> int:
    """First stage with Lambda_ell strictly above 1."""
    for ell in range(1, l_max + 1):
        if kap * kap * c_fn(ell) / nu > 1.0:
            return ell
    raise HorizonError(f"no stage with Lambda > 1 within l_max={l_max}")


_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class AsymptoticReport:
    """Predicted behavior of a multistage scheme at vanishing precision.

    When the scheme is regular (jm = 1, or Lambda_{jm-1} strictly below 1)
    the coverage and efficiency limits are points; at the boundary
    Lambda_{jm-1} = 1 only the interval forms are justified and the point
    predictions are withheld.
    """

    eps: float
    delta: float
    mu: float
    nu: float
    kappa: float
    z_score: float
    fixed_n: float
    lambdas: tuple[float, ...]
    jm: int
    xi_prev: float
    xi_jm: float
    regular: bool
    coverage_point: Optional[float]
    coverage_lower: float
    ratio_point: Optional[float]
    ratio_lo: float
    ratio_hi: float

    def to_text(self) -> str:
        lines = [
            f"eps             {self.eps:.10g}",
            f"delta           {self.delta:.10g}",
            f"mu              {self.mu:.10g}",
            f"nu              {self.nu:.10g}",
            f"kappa           {self.kappa:.10g}",
            f"z_score         {self.z_score:.10g}",
            f"fixed_n         {self.fixed_n:.10g}",
            f"jm              {self.jm}",
            f"regular         {'yes' if self.regular else 'no (boundary)'}",
            "lambda          " + " ".join(
                f"{ell}:{lam:.6g}" for ell, lam in
                enumerate(self.lambdas[:max(self.jm + 3, 8)], start=1)
            ),
            f"xi_prev         {self.xi_prev:.10g}",
            f"xi_jm           {self.xi_jm:.10g}",
            f"coverage_lower  {self.coverage_lower:.10g}",
        ]
        if self.regular:
            lines.append(f"pred_coverage   {self.coverage_point:.10g}")
            lines.append(f"pred_ratio      {self.ratio_point:.10g}")
        else:
            lines.append("pred_coverage   withheld (boundary case)")
        lines.append(f"ratio_interval  [{self.ratio_lo:.10g}, {self.ratio_hi:.10g}]")
        return "\n".join(lines)

    @staticmethod
    def csv_header() -> list[str]:
        return [
            "eps", "delta", "mu", "nu", "kappa", "z_score", "fixed_n", "jm",
            "regular", "xi_prev", "xi_jm", "pred_coverage", "coverage_lower",
            "pred_ratio", "ratio_lo", "ratio_hi",
        ]

    def to_csv_row(self) -> list[str]:
        def fmt(x) -> str:
            if x is None:
                return ""
            if isinstance(x, bool):
                return "1" if x else "0"
            if isinstance(x, int):
                return str(x)
            return f"{x:.10g}"

        return [
            fmt(self.eps), fmt(self.delta), fmt(self.mu), fmt(self.nu),
            fmt(self.kappa), fmt(self.z_score), fmt(self.fixed_n), fmt(self.jm),
            fmt(self.regular), fmt(self.xi_prev), fmt(self.xi_jm),
            fmt(self.coverage_point), fmt(self.coverage_lower),
            fmt(self.ratio_point), fmt(self.ratio_lo), fmt(self.ratio_hi),
        ]


def predict(eps: float, delta: float, mu: float, nu: float,
            shape: MarginShape, sched, l_max: int = 64) -> AsymptoticReport:
    """Full asymptotic report for a validated stage schedule.

    ``sched`` must expose ``c(ell)`` and ``upsilon(ell)`` for ell >= 0; the
    geometric stage constants extend below ell = 1, which the xi_{jm-1} term
    needs when jm = 1.
    """
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    kap = kappa(shape, mu)
    z = normal_quantile(1.0 - delta / 2.0)
    n_fixed = nu * z * z / (kap * eps) ** 2
    lambdas = lambda_table(kap, nu, sched.c, l_max)
    jm = critical_index(kap, nu, sched.c, l_max)

    def xi(ell: int) -> float:
        return kap * math.sqrt(sched.c(ell) * sched.upsilon(ell) / nu)

    xi_prev = xi(jm - 1)
    xi_jm = xi(jm)
    regular = jm == 1 or lambdas[jm - 2] < 1.0 - _BOUNDARY_TOL
    coverage_lower = min(1.0, max(0.0, 2.0 * (normal_cdf(xi_prev)
                                              + normal_cdf(xi_jm)) - 3.0))
    ratio_lo = (xi_prev / z) ** 2
    ratio_hi = (xi_jm / z) ** 2
    coverage_point = min(1.0, max(0.0, 2.0 * normal_cdf(xi_jm) - 1.0)) if regular else None
    ratio_point = ratio_hi if regular else None
    return AsymptoticReport(
        eps=eps, delta=delta, mu=mu, nu=nu, kappa=kap, z_score=z,
        fixed_n=n_fixed, lambdas=lambdas, jm=jm, xi_prev=xi_prev, xi_jm=xi_jm,
        regular=regular, coverage_point=coverage_point,
        coverage_lower=coverage_lower, ratio_point=ratio_point,
        ratio_lo=ratio_lo, ratio_hi=ratio_hi,
    )


# ---------------------------------------------------------------------------
# Concentration bounds (test oracles)
# ---------------------------------------------------------------------------

def be_tail_bound(n: int, gamma: float, nu: float, w: float,
                  c_be: float = 30.0) -> float:
    """Upper bound on Pr{|Y_n - mu| >= gamma}, clipped to [0, 1].

    The nonuniform Berry-Esseen constant is configurable; 30 is a
    conservative literature value.
    """
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    bound = math.exp(-n * gamma * gamma / (2.0 * nu)) \
        + 2.0 * c_be * w / (n * n * gamma**3)
    return min(1.0, bound)


def var_tail_bound(n: int, eta: float, nu: float, w: float, varpi: float,
                   v3: float, c_be: float = 30.0) -> float:
    """Upper bound on Pr{|V_n - nu| >= eta}, clipped to [0, 1].

    varpi = 0 (a.s. constant squared deviation) sends its exponential term
    to 0, the correct limit.
    """
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}")
    t1 = math.exp(-n * eta / (4.0 * nu))
    t2 = math.exp(-n * eta * eta / (8.0 * varpi)) if varpi > 0 else 0.0
    t3 = (4.0 * c_be / (n * n * eta**3)) * (_SQRT2 * w * eta**1.5 + 4.0 * v3)
    return min(1.0, t1 + t2 + t3)


# ---------------------------------------------------------------------------
# Plug-in coverage decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageCounts:
    """Joint event counts for one stage across all trials."""

    stage: int
    n_stage: int                 # scheduled sample size n_ell
    d_zero: int                  # D_ell = 0
    d_one: int                   # D_ell = 1
    d_prev_zero: int             # D_{ell-1} = 0
    first_stop: int              # D_{ell-1} = 0 and D_ell = 1
    miss: int                    # mu not in reporting interval at this stage
    miss_and_first: int          # miss and first_stop jointly
    cover_and_first: int         # covered and first_stop jointly
    stopped_here: int            # stopping index == ell
    stopped_after: int           # stopping index > ell


@dataclass(frozen=True)
class StageAggregate:
    """Per-stage joint frequencies from a profiled multistage run."""

    trials: int
    stages: tuple[StageCounts, ...]


def pbar_pund_q(agg: StageAggregate) -> tuple[float, float, float]:
    """Plug-in estimates of the coverage decomposition bounds.

    Pbar sums the miss-and-first-stop frequencies, Punder is one minus the
    covered-and-first-stop mass, and Q sums the stagewise minimum of the
    three marginal frequencies.  The ordering Punder <= miss rate <= Pbar
    <= Q holds up to Monte Carlo noise.
    """
    if agg.trials < 1 or not agg.stages:
        raise DomainError("empty stage aggregate")
    t = float(agg.trials)
    pbar = sum(s.miss_and_first for s in agg.stages) / t
    pund = 1.0 - sum(s.cover_and_first for s in agg.stages) / t
    q = sum(min(s.miss, s.d_prev_zero, s.d_one) for s in agg.stages) / t
    return pbar, pund, q
