"""Seeded Monte Carlo harness.

Runs many independent trials of a configured rule, aggregates coverage,
sample-size, stopping-index, and risk-bound statistics, and sweeps over a
decreasing list of precisions to exhibit the convergence trends.

Per-trial seeding uses a splitmix64 counter scheme:

    seed_i = mix64(master ^ mix64(i + 1))

where mix64 is the splitmix64 finalizer.  Trials are embarrassingly
parallel; the reduction is a fold in trial-index order, so a summary is a
pure function of (config, master seed) regardless of worker count.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .asymptotics import (
    AsymptoticReport,
    StageAggregate,
    StageCounts,
    fixed_size,
    normal_quantile,
    pbar_pund_q,
    predict,
)
from .errors import ConfigError, DomainError, UnsupportedOperationError
from .margins import MarginShape, report_margins
from .models import MeanModel, ModelStream, SampleState, true_params
from .schedules import SeqSchedule, StageSchedule
from .stopping import StoppingRule, run_multistage, run_sequential

_MASK64 = (1 << 64) - 1
_WILSON_Z = 1.959963984540054  # normal_quantile(0.975)

MODES = ("sequential", "multistage", "fixed")

SUMMARY_COLUMNS = [
    "epsilon", "trials", "coverage", "coverage_lo", "coverage_hi", "mean_n",
    "ratio_EnN", "risk_bound", "miss_rate", "trunc_rate", "jm",
    "pred_coverage", "pred_ratio",
]
TREND_COLUMNS = ["cov_dev", "ratio_dev", "cov_trend_ok", "ratio_trend_ok"]


def mix64(x: int) -> int:
    """splitmix64 finalizer."""
    x &= _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return x ^ (x >> 31)


def trial_seed(master: int, index: int) -> int:
    """Documented 64-bit mix of the master seed and the trial counter."""
    return mix64((master & _MASK64) ^ mix64(index + 1))


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce a run: model, shape, rule, schedules,
    precisions, trial count, master seed, caps, and worker count."""

    model: MeanModel
    mu: float
    shape: MarginShape
    rule: StoppingRule
    mode: str
    epsilons: tuple[float, ...]
    delta: float
    trials: int
    seed: int
    seq_sched: Optional[SeqSchedule] = None
    stage_sched: Optional[StageSchedule] = None
    workers: int = 1
    cap: int = 0              # 0: auto, 64 * fixed-size baseline
    l_cap: int = 40
    fixed_n: int = 0          # 0: auto, ceil of the fixed-size baseline
    profile_extra: int = 2    # stages profiled past the critical index

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown run mode {self.mode!r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not self.epsilons:
            raise ConfigError("at least one epsilon is required")
        if any(e <= 0 or e >= 1 for e in self.epsilons):
            raise ConfigError(f"epsilons must lie in (0, 1): {self.epsilons}")
        if len(self.epsilons) > 1 and any(
            b >= a for a, b in zip(self.epsilons, self.epsilons[1:])
        ):
            raise ConfigError("sweep epsilons must be strictly decreasing")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.mode == "sequential" and self.seq_sched is None:
            raise ConfigError("sequential mode needs a sequential schedule")
        if self.mode == "multistage" and self.stage_sched is None:
            raise ConfigError("multistage mode needs a stage schedule")


@dataclass
class SimSummary:
    """Aggregates of one run at a single precision."""

    mode: str
    epsilon: float
    trials: int
    coverage: float
    coverage_lo: float
    coverage_hi: float
    miss_rate: float
    mean_n: float
    n_std: float
    n_q10: float
    n_q50: float
    n_q90: float
    baseline_n: float
    ratio_EnN: float
    risk_bound: float
    trunc_rate: float
    model_monotone: bool
    jm: Optional[int]
    pred_coverage: Optional[float]
    pred_ratio: Optional[float]
    stop_hist: Optional[dict[int, int]]
    stage_table: Optional[tuple[StageCounts, ...]]
    pbar: Optional[float]
    pund: Optional[float]
    q_bound: Optional[float]
    staircase_bound: Optional[float]
    staircase_se: Optional[float]
    wall_clock: float
    n_values: np.ndarray = field(repr=False)
    covered_values: np.ndarray = field(repr=False)
    truncated_values: np.ndarray = field(repr=False)
    stop_values: Optional[np.ndarray] = field(repr=False, default=None)

    @property
    def coverage_se(self) -> float:
        p = self.coverage
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.trials)

    @property
    def ratio_se(self) -> float:
        return self.n_std / (math.sqrt(self.trials) * self.baseline_n)


def wilson_interval(successes: int, trials: int,
                    z: float = _WILSON_Z) -> tuple[float, float]:
    """Wilson score interval; non-degenerate near coverage 1."""
    if trials < 1:
        raise DomainError("wilson_interval needs at least one trial")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# Per-chunk trial execution (top level so process pools can pickle it)
# ---------------------------------------------------------------------------

def _auto_cap(cfg: SimConfig, eps: float) -> int:
    if cfg.cap > 0:
        return cfg.cap
    mu_t, nu_t = true_params(cfg.model, cfg.mu)
    n_base = fixed_size(eps, cfg.delta, mu_t, nu_t, cfg.shape)
    start = cfg.seq_sched.m_eps(eps) if cfg.seq_sched is not None else 1
    return max(int(math.ceil(64.0 * n_base)), start)


def _auto_fixed_n(cfg: SimConfig, eps: float) -> int:
    if cfg.fixed_n > 0:
        return cfg.fixed_n
    mu_t, nu_t = true_params(cfg.model, cfg.mu)
    return int(math.ceil(fixed_size(eps, cfg.delta, mu_t, nu_t, cfg.shape) - 1e-9))


def _run_chunk(cfg: SimConfig, eps: float, horizon: int,
               start: int, stop: int) -> dict:
    mu_t, _ = true_params(cfg.model, cfg.mu)
    count = stop - start
    n_arr = np.zeros(count, dtype=np.int64)
    cov_arr = np.zeros(count, dtype=np.int8)
    trunc_arr = np.zeros(count, dtype=np.int8)
    est_arr = np.zeros(count, dtype=np.float64)

    if cfg.mode == "fixed":
        n_fixed = _auto_fixed_n(cfg, eps)
        for j, i in enumerate(range(start, stop)):
            stream = ModelStream(cfg.model, mu_t, trial_seed(cfg.seed, i))
            state = SampleState()
            state.extend(stream.take(n_fixed))
            est = state.mean
            n_arr[j] = n_fixed
            est_arr[j] = est
            try:
                r_lo, r_hi = report_margins(cfg.shape, est, eps)
            except DomainError:
                cov_arr[j] = 0  # estimate outside the shape's z-domain
                continue
            cov_arr[j] = 1 if r_lo < mu_t < r_hi else 0
        return {"n": n_arr, "covered": cov_arr, "truncated": trunc_arr,
                "estimate": est_arr}

    if cfg.mode == "sequential":
        cap = _auto_cap(cfg, eps)
        for j, i in enumerate(range(start, stop)):
            stream = ModelStream(cfg.model, mu_t, trial_seed(cfg.seed, i))
            out = run_sequential(stream, cfg.rule, cfg.model, cfg.shape, eps,
                                 cfg.seq_sched, cap, mu_true=mu_t)
            n_arr[j] = out.n
            est_arr[j] = out.estimate
            cov_arr[j] = 1 if out.covered else 0
            trunc_arr[j] = 1 if out.truncated else 0
        return {"n": n_arr, "covered": cov_arr, "truncated": trunc_arr,
                "estimate": est_arr}

    # multistage
    sched = cfg.stage_sched
    t0 = sched.tau(eps)
    width = horizon - t0 + 1
    stop_arr = np.zeros(count, dtype=np.int32)
    d_mat = np.zeros((count, width), dtype=np.int8)
    c_mat = np.zeros((count, width), dtype=np.int8)
    for j, i in enumerate(range(start, stop)):
        stream = ModelStream(cfg.model, mu_t, trial_seed(cfg.seed, i))
        out = run_multistage(stream, cfg.rule, cfg.model, cfg.shape, eps,
                             sched, cfg.l_cap, mu_true=mu_t,
                             profile_to=horizon)
        n_arr[j] = out.n
        est_arr[j] = out.estimate
        cov_arr[j] = 1 if out.covered else 0
        trunc_arr[j] = 1 if out.truncated else 0
        stop_arr[j] = out.stop_index if out.stop_index is not None else 0
        dec = out.decisions or []
        m = min(len(dec), width)
        d_mat[j, :m] = dec[:m]
        sc = out.stage_covered or []
        m2 = min(len(sc), width)
        c_mat[j, :m2] = sc[:m2]
    return {"n": n_arr, "covered": cov_arr, "truncated": trunc_arr,
            "estimate": est_arr, "stop": stop_arr, "d": d_mat, "c": c_mat}


def _chunk_star(args):
    return _run_chunk(*args)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

def _stage_table(cfg: SimConfig, eps: float, t0: int, horizon: int,
                 d_mat: np.ndarray, c_mat: np.ndarray,
                 stop_arr: np.ndarray, trunc_arr: np.ndarray) -> tuple[StageCounts, ...]:
    trials = d_mat.shape[0]
    # stopping index for comparisons, with truncated trials beyond any stage
    stop_cmp = np.where(trunc_arr == 1, np.iinfo(np.int64).max,
                        stop_arr.astype(np.int64))
    rows = []
    for idx in range(horizon - t0 + 1):
        ell = t0 + idx
        d_col = d_mat[:, idx]
        miss_col = 1 - c_mat[:, idx]
        if idx == 0:
            prev_zero = np.ones(trials, dtype=bool)
        else:
            prev_zero = d_mat[:, idx - 1] == 0
        first = prev_zero & (d_col == 1)
        rows.append(StageCounts(
            stage=ell,
            n_stage=cfg.stage_sched.n_ell(ell, eps),
            d_zero=int(np.count_nonzero(d_col == 0)),
            d_one=int(np.count_nonzero(d_col == 1)),
            d_prev_zero=int(np.count_nonzero(prev_zero)),
            first_stop=int(np.count_nonzero(first)),
            miss=int(np.count_nonzero(miss_col == 1)),
            miss_and_first=int(np.count_nonzero(first & (miss_col == 1))),
            cover_and_first=int(np.count_nonzero(first & (miss_col == 0))),
            stopped_here=int(np.count_nonzero(stop_cmp == ell)),
            stopped_after=int(np.count_nonzero(stop_cmp > ell)),
        ))
    return tuple(rows)


def _sequential_risk_bound(cfg: SimConfig, n_values: np.ndarray,
                           trunc: np.ndarray) -> float:
    # sum over n of min(delta_n, Pr{stop at n}), stopped trials only
    stopped = n_values[trunc == 0]
    if stopped.size == 0:
        return math.nan
    t = n_values.size
    uniq, counts = np.unique(stopped, return_counts=True)
    total = 0.0
    for n, c in zip(uniq.tolist(), counts.tolist()):
        total += min(cfg.seq_sched.delta_n(int(n)), c / t)
    return total


def _multistage_risk_bound(cfg: SimConfig, stop_arr: np.ndarray,
                           trunc: np.ndarray) -> float:
    stopped = stop_arr[trunc == 0]
    if stopped.size == 0:
        return math.nan
    t = stop_arr.size
    uniq, counts = np.unique(stopped, return_counts=True)
    total = 0.0
    for ell, c in zip(uniq.tolist(), counts.tolist()):
        total += min(cfg.stage_sched.delta_ell(int(ell)), c / t)
    return total


def run_trials(cfg: SimConfig, eps: Optional[float] = None) -> SimSummary:
    """Run cfg.trials independent trials at one precision.

    Deterministic given (cfg, cfg.seed); independent of cfg.workers because
    per-trial seeds come from the trial index and the reduction folds chunks
    in index order.
    """
    t_start = time.perf_counter()
    eps = cfg.epsilons[0] if eps is None else eps
    mu_t, nu_t = true_params(cfg.model, cfg.mu)
    baseline = fixed_size(eps, cfg.delta, mu_t, nu_t, cfg.shape)

    report: Optional[AsymptoticReport] = None
    horizon = 0
    t0 = 1
    if cfg.mode == "multistage":
        report = predict(eps, cfg.delta, mu_t, nu_t, cfg.shape,
                         cfg.stage_sched, l_max=cfg.l_cap)
        t0 = cfg.stage_sched.tau(eps)
        horizon = min(max(report.jm + cfg.profile_extra, t0), cfg.l_cap)

    t = cfg.trials
    n_workers = min(cfg.workers, t)
    bounds = np.linspace(0, t, n_workers * 4 + 1).astype(int) \
        if n_workers > 1 else np.array([0, t])
    chunks = [(cfg, eps, horizon, int(a), int(b))
              for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_chunk_star, chunks))
    else:
        results = [_run_chunk(*c) for c in chunks]

    n_values = np.concatenate([r["n"] for r in results])
    covered = np.concatenate([r["covered"] for r in results])
    trunc = np.concatenate([r["truncated"] for r in results])

    n_cov = int(covered.sum())
    coverage = n_cov / t
    cov_lo, cov_hi = wilson_interval(n_cov, t)
    mean_n = float(n_values.mean())
    n_std = float(n_values.std(ddof=0))
    q10, q50, q90 = (float(np.quantile(n_values, q)) for q in (0.1, 0.5, 0.9))

    stop_hist = None
    stage_table = None
    pbar = pund = qb = None
    staircase = staircase_se = None
    jm = None
    pred_cov: Optional[float] = None
    pred_ratio: Optional[float] = None
    risk_bound = math.nan

    if cfg.mode == "multistage":
        stop_arr = np.concatenate([r["stop"] for r in results])
        d_mat = np.concatenate([r["d"] for r in results], axis=0)
        c_mat = np.concatenate([r["c"] for r in results], axis=0)
        hist_uniq, hist_counts = np.unique(stop_arr[trunc == 0],
                                           return_counts=True)
        stop_hist = {int(k): int(v) for k, v in zip(hist_uniq, hist_counts)}
        stage_table = _stage_table(cfg, eps, t0, horizon, d_mat, c_mat,
                                   stop_arr, trunc)
        pbar, pund, qb = pbar_pund_q(StageAggregate(t, stage_table))
        risk_bound = _multistage_risk_bound(cfg, stop_arr, trunc)
        # staircase bound on E[n]: n_tau + sum (n_{l+1} - n_l) Pr{D_l = 0}
        staircase = float(stage_table[0].n_stage)
        var_acc = 0.0
        for row in stage_table[:-1]:
            gap = cfg.stage_sched.n_ell(row.stage + 1, eps) - row.n_stage
            p0 = row.d_zero / t
            staircase += gap * p0
            var_acc += (gap**2) * p0 * (1.0 - p0) / t
        staircase_se = math.sqrt(var_acc)
        jm = report.jm
        pred_cov = report.coverage_point
        pred_ratio = report.ratio_point
        summary_stop = stop_arr
    else:
        summary_stop = None
        pred_cov = 1.0 - cfg.delta
        pred_ratio = 1.0
        if cfg.mode == "sequential":
            risk_bound = _sequential_risk_bound(cfg, n_values, trunc)

    return SimSummary(
        mode=cfg.mode,
        epsilon=eps,
        trials=t,
        coverage=coverage,
        coverage_lo=cov_lo,
        coverage_hi=cov_hi,
        miss_rate=1.0 - coverage,
        mean_n=mean_n,
        n_std=n_std,
        n_q10=q10,
        n_q50=q50,
        n_q90=q90,
        baseline_n=baseline,
        ratio_EnN=mean_n / baseline,
        risk_bound=risk_bound,
        trunc_rate=float(trunc.mean()),
        model_monotone=cfg.model.monotone,
        jm=jm,
        pred_coverage=pred_cov,
        pred_ratio=pred_ratio,
        stop_hist=stop_hist,
        stage_table=stage_table,
        pbar=pbar,
        pund=pund,
        q_bound=qb,
        staircase_bound=staircase,
        staircase_se=staircase_se,
        wall_clock=time.perf_counter() - t_start,
        n_values=n_values,
        covered_values=covered,
        truncated_values=trunc,
        stop_values=summary_stop,
    )


@dataclass
class SweepResult:
    """One summary row per precision plus per-row trend diagnostics."""

    rows: list[SimSummary]
    delta: float

    def cov_devs(self) -> list[float]:
        return [abs(r.coverage - (1.0 - self.delta)) for r in self.rows]

    def ratio_devs(self) -> list[float]:
        return [abs(r.ratio_EnN - 1.0) for r in self.rows]

    def cov_trend_ok(self) -> list[bool]:
        devs = self.cov_devs()
        out = [True]
        for i in range(1, len(self.rows)):
            slack = 2.0 * math.hypot(self.rows[i - 1].coverage_se,
                                     self.rows[i].coverage_se)
            out.append(devs[i] <= devs[i - 1] + slack)
        return out

    def ratio_trend_ok(self) -> list[bool]:
        devs = self.ratio_devs()
        out = [True]
        for i in range(1, len(self.rows)):
            slack = 2.0 * math.hypot(self.rows[i - 1].ratio_se,
                                     self.rows[i].ratio_se)
            out.append(devs[i] <= devs[i - 1] + slack)
        return out


def sweep(cfg: SimConfig) -> SweepResult:
    """One run per epsilon in the configured decreasing list."""
    rows = [run_trials(cfg, eps) for eps in cfg.epsilons]
    return SweepResult(rows=rows, delta=cfg.delta)


def risk_bound_check(summary: SimSummary,
                     miss_rate: Optional[float] = None) -> tuple[bool, float]:
    """Empirical miss rate against the stopping-distribution risk bound.

    Valid only under the monotone-tail hypothesis; returns (ok, slack)
    where slack is the remaining margin after three standard errors.
    """
    if not summary.model_monotone:
        raise UnsupportedOperationError(
            "risk bound applies only to monotone-tail models"
        )
    if math.isnan(summary.risk_bound):
        raise DomainError("summary carries no risk bound")
    miss = summary.miss_rate if miss_rate is None else miss_rate
    se = math.sqrt(max(miss * (1.0 - miss), 0.0) / summary.trials)
    limit = summary.risk_bound + 3.0 * se
    return miss <= limit, limit - miss


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    xf = float(x)
    if math.isnan(xf):
        return ""
    return f"{xf:.10g}"


def summary_row(s: SimSummary) -> list[str]:
    return [_fmt(v) for v in (
        s.epsilon, s.trials, s.coverage, s.coverage_lo, s.coverage_hi,
        s.mean_n, s.ratio_EnN, s.risk_bound, s.miss_rate, s.trunc_rate,
        s.jm, s.pred_coverage, s.pred_ratio,
    )]


def write_summary_csv(rows: Sequence[SimSummary], path,
                      sweep_result: Optional[SweepResult] = None) -> None:
    """Summary CSV; sweeps append the trend diagnostic columns."""
    header = list(SUMMARY_COLUMNS)
    extra: list[list[str]] = [[] for _ in rows]
    if sweep_result is not None:
        header += TREND_COLUMNS
        cd = sweep_result.cov_devs()
        rd = sweep_result.ratio_devs()
        ct = sweep_result.cov_trend_ok()
        rt = sweep_result.ratio_trend_ok()
        # the first row has no predecessor, so its trend flags stay blank
        extra = [[_fmt(cd[i]), _fmt(rd[i]),
                  "" if i == 0 else _fmt(ct[i]),
                  "" if i == 0 else _fmt(rt[i])]
                 for i in range(len(rows))]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for s, ex in zip(rows, extra):
            writer.writerow(summary_row(s) + ex)


def write_trials_csv(summary: SimSummary, path) -> None:
    """Optional per-trial records."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["trial", "n", "covered", "truncated"]
        if summary.stop_values is not None:
            header.insert(2, "stop_index")
        writer.writerow(header)
        for i in range(summary.trials):
            row = [str(i), str(int(summary.n_values[i]))]
            if summary.stop_values is not None:
                row.append(str(int(summary.stop_values[i])))
            row.append(str(int(summary.covered_values[i])))
            row.append(str(int(summary.truncated_values[i])))
            writer.writerow(row)
