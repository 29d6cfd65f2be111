"""Figure rendering for the CLI report path.

The harness itself emits plot-ready CSV only; these helpers turn its
summaries into PNG files written alongside the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sim import SimSummary, SweepResult


def sweep_figure(result: SweepResult, path) -> None:
    """Coverage and efficiency against decreasing precision."""
    rows = result.rows
    eps = [r.epsilon for r in rows]
    cov = [r.coverage for r in rows]
    cov_err = [
        (r.coverage - r.coverage_lo, r.coverage_hi - r.coverage)
        for r in rows
    ]
    ratio = [r.ratio_EnN for r in rows]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    ax1.errorbar(eps, cov,
                 yerr=np.array(cov_err).T, fmt="o-", capsize=3,
                 label="empirical coverage")
    ax1.axhline(1.0 - result.delta, color="gray", linestyle="--",
                label=f"target {1.0 - result.delta:g}")
    ax1.set_xscale("log")
    ax1.invert_xaxis()
    ax1.set_xlabel("precision eps")
    ax1.set_ylabel("coverage")
    ax1.legend(fontsize=8)

    ax2.plot(eps, ratio, "s-", label="E[n] / N")
    preds = [r.pred_ratio for r in rows if r.pred_ratio is not None]
    if preds and rows[0].mode == "multistage":
        ax2.plot(eps, [r.pred_ratio for r in rows], "x--",
                 label="predicted limit")
    else:
        ax2.axhline(1.0, color="gray", linestyle="--", label="limit 1")
    ax2.set_xscale("log")
    ax2.invert_xaxis()
    ax2.set_xlabel("precision eps")
    ax2.set_ylabel("sample-size ratio")
    ax2.legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def run_figure(summary: SimSummary, path) -> None:
    """Sample-size histogram, or the stopping-index bar chart for
    multistage runs with the scheduled stage sizes annotated."""
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    if summary.mode == "multistage" and summary.stop_hist:
        stages = sorted(summary.stop_hist)
        counts = [summary.stop_hist[s] for s in stages]
        ax.bar(stages, counts, width=0.6)
        if summary.jm is not None:
            ax.axvline(summary.jm, color="red", linestyle="--",
                       label=f"critical index {summary.jm}")
            ax.legend(fontsize=8)
        ax.set_xlabel("stopping index")
        ax.set_xticks(stages)
    else:
        ax.hist(summary.n_values, bins=min(60, max(10, summary.trials // 50)))
        ax.axvline(summary.baseline_n, color="red", linestyle="--",
                   label=f"baseline N = {summary.baseline_n:.1f}")
        ax.legend(fontsize=8)
        ax.set_xlabel("sample size at stopping")
    ax.set_ylabel("trials")
    ax.set_title(f"eps = {summary.epsilon:g}, coverage = {summary.coverage:.4f}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
