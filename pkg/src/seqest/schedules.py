"""Confidence sequences and multistage sample-size schedules.

Sequential rules consume a sequence {delta_n} tending to a family-specific
limit together with a start index m_eps; multistage rules consume stage
constants C_ell (geometric by default), per-stage confidence levels
delta_ell, the induced factors Upsilon_ell, and stage sizes
n_ell = ceil(C_ell Upsilon_ell / eps^2).

The required limits per family:

* cdf:     delta_n -> delta
* ld:      Phi(sqrt(2 ln(2/delta_n))) -> 1 - delta/2,
           i.e. delta_n -> 2 exp(-Z^2/2)
* nal/df:  Phi(sqrt(ln(1/delta_n))) -> 1 - delta/2,
           i.e. delta_n -> exp(-Z^2)

The defaults reach these limits through the rational ramp
delta_n = delta_inf * n / (n + 1), which keeps early stages conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .asymptotics import normal_cdf, normal_quantile
from .errors import DomainError, OverflowCapError, ScheduleValidationError

FAMILIES = ("cdf", "ld", "nal", "df")

# 2*exp(-Z^2/2) < 1 fails for delta at or above this; the ld family cannot
# satisfy its limit condition with delta_n < 1 beyond it.
LD_DELTA_MAX = 2.0 * (1.0 - normal_cdf(math.sqrt(2.0 * math.log(2.0))))


def _ceil_snap(x: float) -> int:
    # Values within 1e-9 (relative) above an integer collapse to it, so that
    # expressions like 1/0.04 do not ceil to 26.
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def _check_family(family: str) -> None:
    if family not in FAMILIES:
        raise DomainError(f"unknown schedule family {family!r}")


def limiting_delta(family: str, delta: float) -> float:
    """The value delta_n must approach for the family's limit condition."""
    _check_family(family)
    if family == "cdf":
        return delta
    z = normal_quantile(1.0 - delta / 2.0)
    if family == "ld":
        return 2.0 * math.exp(-0.5 * z * z)
    return math.exp(-z * z)


# ---------------------------------------------------------------------------
# Sequential schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeqSchedule:
    """delta_n sequence and start index for a fully sequential rule."""

    family: str
    delta: float
    delta_fn: Optional[Callable[[int], float]] = None

    def __post_init__(self):
        _check_family(self.family)
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must be in (0, 1), got {self.delta}")
        if self.family == "ld" and self.delta >= LD_DELTA_MAX:
            raise DomainError(
                f"ld family requires delta < {LD_DELTA_MAX:.6f} so that the "
                f"limiting delta_n stays below 1; got {self.delta}"
            )

    @property
    def delta_inf(self) -> float:
        return limiting_delta(self.family, self.delta)

    def delta_n(self, n: int) -> float:
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        if self.delta_fn is not None:
            return self.delta_fn(n)
        return self.delta_inf * n / (n + 1.0)

    def m_eps(self, eps: float) -> int:
        if not 0.0 < eps < 1.0:
            raise DomainError(f"eps must be in (0, 1), got {eps}")
        return _ceil_snap(1.0 / eps)


def delta_seq(sched: SeqSchedule, n: int) -> float:
    """delta_n for the sequential rule at sample count n."""
    return sched.delta_n(n)


def start_n(sched: SeqSchedule, eps: float) -> int:
    """Start index m_eps = ceil(1/eps); m_eps -> inf while eps^2 m_eps -> 0."""
    return sched.m_eps(eps)


def validate_seq_schedule(sched: SeqSchedule) -> list[str]:
    """Finite-horizon checks of the sequence conditions; returns violations."""
    out: list[str] = []
    probes = (1, 2, 5, 10, 100, 10_000, 1_000_000)
    try:
        values = [sched.delta_n(n) for n in probes]
    except Exception as exc:  # custom delta_fn may misbehave
        return [f"delta_n evaluation failed: {exc}"]
    for n, d in zip(probes, values):
        if not 0.0 < d < 1.0:
            out.append(f"delta_n({n}) = {d} is outside (0, 1)")
    target = sched.delta_inf
    if abs(values[-1] - target) > 1e-5:
        out.append(
            f"delta_n does not approach its required limit {target:.6g} "
            f"(delta_n(1e6) = {values[-1]:.6g})"
        )
    if sched.family == "ld":
        got = normal_cdf(math.sqrt(2.0 * math.log(2.0 / values[-1])))
        if abs(got - (1.0 - sched.delta / 2.0)) > 1e-5:
            out.append("ld limit condition Phi(sqrt(2 ln(2/delta_n))) violated")
    if sched.family in ("nal", "df"):
        got = normal_cdf(math.sqrt(math.log(1.0 / values[-1])))
        if abs(got - (1.0 - sched.delta / 2.0)) > 1e-5:
            out.append("limit condition Phi(sqrt(ln(1/delta_n))) violated")
    m_small, m_big = sched.m_eps(1e-2), sched.m_eps(1e-6)
    if not m_big > m_small:
        out.append("m_eps does not grow as eps decreases")
    if not 1e-12 * m_big < 1e-3:
        out.append("eps^2 m_eps does not vanish")
    return out


# ---------------------------------------------------------------------------
# Multistage schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageSchedule:
    """Stage constants, per-stage confidence levels, and sample sizes.

    C_ell defaults to the geometric c_ratio^(ell-1); delta_ell is constant
    or harmonic (delta / ell).  Override callables exist for nonstandard
    schedules (the validator decides whether they conform).
    """

    family: str
    delta: float
    c_ratio: float = 2.0
    delta_ell_mode: str = "constant"
    cap_n: int = 100_000_000
    tau_fn: Optional[Callable[[float], int]] = None
    c_fn: Optional[Callable[[int], float]] = None
    delta_fn: Optional[Callable[[int], float]] = None
    n_fn: Optional[Callable[[int, float], int]] = None

    def __post_init__(self):
        _check_family(self.family)
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f"delta must be in (0, 1), got {self.delta}")
        if self.c_fn is None and not 1.0 < self.c_ratio <= 8.0:
            raise DomainError(
                f"C-schedule ratio must exceed 1 and stay at most 8, "
                f"got {self.c_ratio}"
            )
        if self.delta_ell_mode not in ("constant", "harmonic"):
            raise DomainError(f"unknown delta_ell_mode {self.delta_ell_mode!r}")
        if self.cap_n < 1:
            raise DomainError(f"cap_n must be >= 1, got {self.cap_n}")

    def c(self, ell: int) -> float:
        if self.c_fn is not None:
            return self.c_fn(ell)
        return self.c_ratio ** (ell - 1)

    def delta_ell(self, ell: int) -> float:
        if self.delta_fn is not None:
            return self.delta_fn(ell)
        if self.delta_ell_mode == "harmonic":
            return self.delta / max(ell, 1)
        return self.delta

    def upsilon(self, ell: int) -> float:
        d = self.delta_ell(ell)
        if not 0.0 < d < 1.0:
            raise DomainError(f"delta_ell({ell}) = {d} outside (0, 1)")
        if self.family == "cdf":
            q = normal_quantile(1.0 - d / 2.0)
            return q * q
        if self.family == "ld":
            return 2.0 * math.log(2.0 / d)
        return math.log(1.0 / d)

    def n_ell(self, ell: int, eps: float) -> int:
        if not eps > 0:
            raise DomainError(f"eps must be positive, got {eps}")
        if self.n_fn is not None:
            n = self.n_fn(ell, eps)
        else:
            n = _ceil_snap(self.c(ell) * self.upsilon(ell) / (eps * eps))
        if n > self.cap_n:
            raise OverflowCapError(
                f"n_ell({ell}) = {n} exceeds cap_n = {self.cap_n}"
            )
        return n

    def tau(self, eps: float) -> int:
        if not eps > 0:
            raise DomainError(f"eps must be positive, got {eps}")
        if self.tau_fn is not None:
            return self.tau_fn(eps)
        return 1


def stage_sizes(sched: StageSchedule, eps: float, l_max: int) -> list[int]:
    """Sample sizes n_1..n_{l_max}; raises OverflowCapError past cap_n."""
    if l_max < 1:
        raise DomainError(f"l_max must be >= 1, got {l_max}")
    return [sched.n_ell(ell, eps) for ell in range(1, l_max + 1)]


def tau(sched: StageSchedule, eps: float) -> int:
    """Starting index; the default constant 1 trivially has limit 1."""
    return sched.tau(eps)


def validate_stage_schedule(sched: StageSchedule, eps_probe: float = 0.05,
                            l_check: int = 64) -> list[str]:
    """Finite-horizon checks of every quoted ratio/limit condition."""
    out: list[str] = []
    try:
        cs = [sched.c(ell) for ell in range(1, l_check + 2)]
        ups = [sched.upsilon(ell) for ell in range(1, l_check + 2)]
        deltas = [sched.delta_ell(ell) for ell in range(1, l_check + 2)]
    except Exception as exc:
        return [f"schedule evaluation failed: {exc}"]

    for ell in range(l_check):
        r = cs[ell + 1] / cs[ell]
        if not 1.0 + 1e-6 < r < 1e6:
            out.append(
                f"C-schedule ratio must exceed 1 and stay bounded; "
                f"C_{ell + 2}/C_{ell + 1} = {r:.6g}"
            )
            break
    for ell in range(l_check):
        r = ups[ell + 1] / ups[ell]
        if not 1.0 - 1e-12 <= r < 1e6:
            out.append(f"Upsilon ratio out of [1, inf): {r:.6g} at ell={ell + 1}")
            break
    for ell in range(l_check):
        d = deltas[ell]
        if not 0.0 < d < 1.0:
            out.append(f"delta_ell({ell + 1}) = {d} outside (0, 1)")
            break
        if deltas[ell + 1] > d + 1e-15:
            out.append(f"delta_ell increases at ell={ell + 1}")
            break
    if sched.family == "cdf":
        # delta_ell (C_ell Upsilon_ell)^2 must diverge; monotone growth from
        # a small start index is the finite-horizon proxy.
        vals = [deltas[ell] * (cs[ell] * ups[ell]) ** 2 for ell in range(l_check)]
        start = 3
        if any(b <= a for a, b in zip(vals[start:], vals[start + 1:])):
            out.append("cdf family requires delta_ell (C_ell Upsilon_ell)^2 -> inf")

    try:
        sizes = stage_sizes(sched, eps_probe, 12)
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            out.append(f"stage sizes not strictly increasing at eps={eps_probe}")
        for ell, n in enumerate(sizes, start=1):
            ratio = eps_probe**2 * n / (cs[ell - 1] * ups[ell - 1])
            if not 1.0 - 1e-9 <= ratio <= 1.0 + eps_probe**2 / (cs[ell - 1] * ups[ell - 1]) + 1e-9:
                out.append(
                    f"eps^2 n_ell / (C_ell Upsilon_ell) = {ratio:.6g} strays "
                    f"from 1 at ell={ell}"
                )
                break
    except OverflowCapError:
        pass
    except Exception as exc:
        out.append(f"stage size evaluation failed: {exc}")

    for probe in (1e-6, 1e-9):
        t = sched.tau(probe)
        if not (isinstance(t, int) and t >= 1):
            out.append(f"tau({probe:g}) = {t} is not a positive integer")
        elif t != 1:
            out.append(
                f"tau({probe:g}) = {t}; the starting index must tend to 1"
            )
    return out


def validate_or_raise(violations: list[str]) -> None:
    if violations:
        raise ScheduleValidationError("; ".join(violations))
