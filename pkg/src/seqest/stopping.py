"""Stopping decision predicates and the sampling drivers.

Four decision families, each the eliminated form of an interval-inclusion
test (no confidence limits are ever inverted):

* cdf:  both exact sample-mean tails, evaluated at the margin endpoints,
        fall at or below delta_n / 2
* ld:   the rate function at both margin endpoints falls at or below
        ln(delta_n / 2) / n
* nal:  the variance at a point interpolated toward each margin falls at or
        below n * (margin - mean)^2 / ln(1/delta_n)
* df:   distribution-free; sample variance plus rho/n falls at or below
        n / ln(1/delta_n) times the squared nearer margin

The sequential driver evaluates its rule at every n from m_eps on; the
multistage driver extends a cumulative sample to each scheduled n_ell and
evaluates the stage decision D_ell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .errors import DomainError, OverflowCapError, UnsupportedOperationError
from .margins import MarginShape, margin_lower, margin_upper, report_margins
from .models import (
    MeanModel,
    SampleState,
    _lower_tail,
    _upper_tail,
    variance,
)
from .rate_fn import rate
from .schedules import SeqSchedule, StageSchedule

RULE_KINDS = ("cdf", "ld", "nal", "df")


@dataclass(frozen=True)
class StoppingRule:
    """Rule family tag plus its interpolation/regularization parameter.

    rho is the linear-interpolation weight for nal (in [0, 1]) and the
    variance regularizer for df (positive and at most 1 sequentially,
    any nonnegative value multistage).
    """

    kind: str
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise DomainError(f"unknown rule kind {self.kind!r}")
        if self.kind == "nal" and not 0.0 <= self.rho <= 1.0:
            raise DomainError(f"nal requires rho in [0, 1], got {self.rho}")
        if self.kind == "df" and self.rho < 0.0:
            raise DomainError(f"df requires rho >= 0, got {self.rho}")


def rule_from_config(kind: str, rho: float | None = None) -> StoppingRule:
    if rho is None:
        rho = 0.5 if kind == "df" else 0.0
    return StoppingRule(kind, rho)


def _require_parametric(model: MeanModel) -> None:
    if model.family == "opaque":
        raise UnsupportedOperationError(
            "this rule needs distributional knowledge; use the df rule "
            "for opaque models"
        )


def decide_cdf(model: MeanModel, state: SampleState, shape: MarginShape,
               eps: float, delta_n: float) -> bool:
    """Exact-tail decision; a margin endpoint outside the mean domain makes
    that side's tail 0 and hence satisfied."""
    _require_parametric(model)
    y = state.mean
    n = state.n
    half = 0.5 * delta_n
    try:
        hi = margin_upper(shape, y, eps)
        lo = margin_lower(shape, y, eps)
    except DomainError:
        return False
    if _lower_tail(model, n, y, hi) > half:
        return False
    return _upper_tail(model, n, y, lo) <= half


def decide_ld(model: MeanModel, state: SampleState, shape: MarginShape,
              eps: float, delta_n: float) -> bool:
    """Large-deviation decision; rate -inf (endpoint off-domain) trivially
    satisfies its side."""
    _require_parametric(model)
    y = state.mean
    thr = math.log(0.5 * delta_n) / state.n
    try:
        hi = margin_upper(shape, y, eps)
        lo = margin_lower(shape, y, eps)
    except DomainError:
        return False
    if rate(model, y, hi) > thr:
        return False
    return rate(model, y, lo) <= thr


def decide_nal(model: MeanModel, state: SampleState, shape: MarginShape,
               eps: float, delta_n: float, rho: float) -> bool:
    """Normal-approximation decision with variance taken at the point
    interpolated a fraction rho toward each margin.  An interpolated point
    outside the mean domain leaves that side unsatisfied."""
    _require_parametric(model)
    y = state.mean
    n = state.n
    ln_inv = -math.log(delta_n)
    try:
        hi = margin_upper(shape, y, eps)
        lo = margin_lower(shape, y, eps)
    except DomainError:
        return False
    for edge in (hi, lo):
        pt = y + rho * (edge - y)
        if not model.contains_mean(pt):
            return False
        if variance(model, pt) > n * (edge - y) ** 2 / ln_inv:
            return False
    return True


def decide_df(state: SampleState, shape: MarginShape, eps: float,
              delta_n: float, rho: float) -> bool:
    """Distribution-free decision from (n, mean, sample variance) only."""
    y = state.mean
    n = state.n
    try:
        hi = margin_upper(shape, y, eps)
        lo = margin_lower(shape, y, eps)
    except DomainError:
        return False
    nearer_sq = min((hi - y) ** 2, (y - lo) ** 2)
    return state.var + rho / n <= n * nearer_sq / (-math.log(delta_n))


def _decider(rule: StoppingRule, model: Optional[MeanModel],
             shape: MarginShape, eps: float) -> Callable[[SampleState, float], bool]:
    if rule.kind == "cdf":
        return lambda st, d: decide_cdf(model, st, shape, eps, d)
    if rule.kind == "ld":
        return lambda st, d: decide_ld(model, st, shape, eps, d)
    if rule.kind == "nal":
        rho = rule.rho
        return lambda st, d: decide_nal(model, st, shape, eps, d, rho)
    rho = rule.rho
    return lambda st, d: decide_df(st, shape, eps, d, rho)


@dataclass
class TrialOutcome:
    """One stopped (or truncated) trial."""

    n: int
    estimate: float
    stop_lower: float
    stop_upper: float
    report_lower: float
    report_upper: float
    covered: Optional[bool]
    truncated: bool
    stop_index: Optional[int] = None
    first_stage: Optional[int] = None
    decisions: Optional[list[int]] = None
    stage_covered: Optional[list[int]] = None
    stage_ns: Optional[list[int]] = None


def _intervals(shape: MarginShape, estimate: float, eps: float,
               mu_true: Optional[float]):
    try:
        s_lo = margin_lower(shape, estimate, eps)
        s_hi = margin_upper(shape, estimate, eps)
        r_lo, r_hi = report_margins(shape, estimate, eps)
    except DomainError:
        nan = math.nan
        return nan, nan, nan, nan, None
    covered = (r_lo < mu_true < r_hi) if mu_true is not None else None
    return s_lo, s_hi, r_lo, r_hi, covered


def run_sequential(stream, rule: StoppingRule, model: Optional[MeanModel],
                   shape: MarginShape, eps: float, sched: SeqSchedule,
                   cap: int, mu_true: Optional[float] = None,
                   stride: int = 1) -> TrialOutcome:
    """Draw one observation at a time from n = m_eps on, stopping at the
    first n whose decision holds.  Reaching the cap without stopping is a
    flagged outcome, not an error.

    stride > 1 evaluates the decision only every stride-th n (and at the
    cap); it trades fidelity for speed and changes the stopping law, so it
    is off by default.
    """
    if rule.kind == "df" and not 0.0 < rule.rho <= 1.0:
        raise DomainError(
            f"sequential df requires rho in (0, 1], got {rule.rho}"
        )
    if stride < 1:
        raise DomainError(f"stride must be >= 1, got {stride}")
    m = sched.m_eps(eps)
    if cap < m:
        raise DomainError(f"cap {cap} is below the start index {m}")
    decide = _decider(rule, model, shape, eps)
    delta_n = sched.delta_n

    state = SampleState()
    state.extend(stream.take(m))
    n = m
    stopped = decide(state, delta_n(n))
    while not stopped and n < cap:
        state.push(stream.next())
        n += 1
        if (n - m) % stride == 0 or n == cap:
            stopped = decide(state, delta_n(n))

    est = state.mean
    s_lo, s_hi, r_lo, r_hi, covered = _intervals(shape, est, eps, mu_true)
    return TrialOutcome(
        n=n, estimate=est, stop_lower=s_lo, stop_upper=s_hi,
        report_lower=r_lo, report_upper=r_hi, covered=covered,
        truncated=not stopped,
    )


def run_multistage(stream, rule: StoppingRule, model: Optional[MeanModel],
                   shape: MarginShape, eps: float, sched: StageSchedule,
                   l_cap: int, mu_true: Optional[float] = None,
                   profile_to: Optional[int] = None) -> TrialOutcome:
    """Extend a cumulative sample to each scheduled n_ell and evaluate the
    stage decision D_ell; the outcome reports the first stage with D = 1.

    With profile_to set, sampling continues past the stopping stage through
    that index recording the D_ell and coverage traces, which the harness
    needs for the Pbar/Punder/Q and stagewise-probability estimates.
    """
    t0 = sched.tau(eps)
    if l_cap < t0:
        raise DomainError(f"l_cap {l_cap} is below the starting index {t0}")
    decide = _decider(rule, model, shape, eps)

    state = SampleState()
    n_prev = 0
    stop_index: Optional[int] = None
    stop_est = math.nan
    stop_n = 0
    decisions: list[int] = []
    stage_covered: list[int] = []
    stage_ns: list[int] = []

    for ell in range(t0, l_cap + 1):
        try:
            n_l = sched.n_ell(ell, eps)
        except OverflowCapError:
            break
        state.extend(stream.take(n_l - n_prev))
        n_prev = n_l
        d = decide(state, sched.delta_ell(ell))
        decisions.append(1 if d else 0)
        stage_ns.append(n_l)
        if mu_true is not None:
            try:
                r_lo, r_hi = report_margins(shape, state.mean, eps)
                stage_covered.append(1 if r_lo < mu_true < r_hi else 0)
            except DomainError:
                stage_covered.append(0)
        if d and stop_index is None:
            stop_index = ell
            stop_est = state.mean
            stop_n = n_l
        if stop_index is not None and (profile_to is None or ell >= profile_to):
            break

    truncated = stop_index is None
    if truncated:
        stop_est = state.mean if state.n else math.nan
        stop_n = n_prev
        stop_index_out = None
    else:
        stop_index_out = stop_index
    s_lo, s_hi, r_lo, r_hi, covered = _intervals(shape, stop_est, eps, mu_true)
    return TrialOutcome(
        n=stop_n, estimate=stop_est, stop_lower=s_lo, stop_upper=s_hi,
        report_lower=r_lo, report_upper=r_hi, covered=covered,
        truncated=truncated, stop_index=stop_index_out, first_stage=t0,
        decisions=decisions, stage_covered=stage_covered or None,
        stage_ns=stage_ns,
    )
