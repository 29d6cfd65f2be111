"""Command-line front end.

Subcommands: validate, run, sweep, predict, rate-table.  Configuration is a
flat-sectioned key=value file (TOML-compatible subset); repeatable
``--override section.key=value`` flags are applied after the file parse, and
the explicit ``--seed/--trials/--workers`` flags win over both.

Exit codes: 0 success, 1 validation or assertion failure, 2 usage/parse/IO
errors.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Optional

import tomli

from . import figures
from .asymptotics import AsymptoticReport, predict
from .errors import ConfigError, DomainError, ScheduleValidationError, SeqestError
from .margins import MarginShape, shape_from_config
from .models import MeanModel, model_from_config, true_params
from .rate_fn import rate, rate_numeric
from .schedules import (
    SeqSchedule,
    StageSchedule,
    validate_seq_schedule,
    validate_stage_schedule,
)
from .sim import (
    SimConfig,
    risk_bound_check,
    run_trials,
    sweep,
    write_summary_csv,
    write_trials_csv,
)
from .stopping import rule_from_config

_DEFAULTS = {
    "shape": "absolute",
    "mixed": {"rho": 0.5},
    "model": {"family": "bernoulli", "mu": 0.5, "sigma2": 1.0,
              "opaque": {"kind": "uniform_mixture"}},
    "rule": {"kind": "df"},
    "schedule": {"family": "df", "delta": 0.05, "C_ratio": 2.0,
                 "delta_ell_mode": "constant", "cap_n": 100_000_000},
    "run": {"mode": "sequential", "epsilon": 0.05, "trials": 1000,
            "seed": 1, "workers": 0, "cap": 0, "l_cap": 40, "fixed_n": 0,
            "per_trial": False},
    "report": {"figures": True},
    "table": {"points": 21, "span": 0.5},
}


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: Optional[str]) -> dict:
    cfg = {k: (dict(v) if isinstance(v, dict) else v)
           for k, v in _DEFAULTS.items()}
    if path is None:
        return cfg
    with open(path, "rb") as fh:
        parsed = tomli.load(fh)
    return _deep_merge(cfg, parsed)


def apply_override(cfg: dict, spec: str) -> None:
    """Apply one dotted key=value override; values parse as TOML scalars."""
    if "=" not in spec:
        raise ConfigError(f"override must look like section.key=value: {spec!r}")
    key, raw = spec.split("=", 1)
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    node = cfg
    parts = key.strip().split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} crosses a scalar")
    node[parts[-1]] = value


def _build_shape(cfg: dict) -> MarginShape:
    return shape_from_config(cfg["shape"], rho=cfg.get("mixed", {}).get("rho"))


def _build_model(cfg: dict) -> tuple[MeanModel, float]:
    m = cfg["model"]
    model = model_from_config(m["family"], sigma2=m.get("sigma2", 1.0),
                              opaque_kind=m.get("opaque", {}).get(
                                  "kind", "uniform_mixture"))
    mu = model.fixed_mean if model.family == "opaque" else float(m["mu"])
    return model, mu


def _epsilons(run_cfg: dict) -> tuple[float, ...]:
    if "epsilons" in run_cfg:
        return tuple(float(e) for e in run_cfg["epsilons"])
    return (float(run_cfg["epsilon"]),)


def _resolve_workers(value: int) -> int:
    if value > 0:
        return value
    env = os.environ.get("SEQEST_WORKERS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def build_sim_config(cfg: dict) -> SimConfig:
    shape = _build_shape(cfg)
    model, mu = _build_model(cfg)
    rule = rule_from_config(cfg["rule"]["kind"], cfg["rule"].get("rho"))
    sc = cfg["schedule"]
    run = cfg["run"]
    mode = run["mode"]
    seq_sched = None
    stage_sched = None
    if mode == "sequential":
        seq_sched = SeqSchedule(sc["family"], float(sc["delta"]))
    if mode in ("multistage", "fixed") or mode == "sequential":
        # the stage schedule also backs the predict report regardless of mode
        stage_sched = StageSchedule(
            sc["family"], float(sc["delta"]), c_ratio=float(sc["C_ratio"]),
            delta_ell_mode=sc["delta_ell_mode"], cap_n=int(sc["cap_n"]),
        )
    return SimConfig(
        model=model, mu=mu, shape=shape, rule=rule, mode=mode,
        epsilons=_epsilons(run), delta=float(sc["delta"]),
        trials=int(run["trials"]), seed=int(run["seed"]),
        seq_sched=seq_sched, stage_sched=stage_sched,
        workers=_resolve_workers(int(run["workers"])),
        cap=int(run["cap"]), l_cap=int(run["l_cap"]),
        fixed_n=int(run["fixed_n"]),
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(cfg: dict) -> int:
    violations: list[str] = []
    shape = None
    try:
        shape = _build_shape(cfg)
    except SeqestError as exc:
        violations.append(f"shape: {exc}")
    model = None
    try:
        model, mu = _build_model(cfg)
        true_params(model, mu)
    except (SeqestError, KeyError) as exc:
        violations.append(f"model: {exc}")

    sc = cfg["schedule"]
    run = cfg["run"]
    try:
        stage = StageSchedule(
            sc["family"], float(sc["delta"]), c_ratio=float(sc["C_ratio"]),
            delta_ell_mode=sc["delta_ell_mode"], cap_n=int(sc["cap_n"]),
        )
        violations.extend(validate_stage_schedule(stage))
    except SeqestError as exc:
        violations.append(f"stage schedule: {exc}")
    if run["mode"] == "sequential":
        try:
            seq = SeqSchedule(sc["family"], float(sc["delta"]))
            violations.extend(validate_seq_schedule(seq))
        except SeqestError as exc:
            violations.append(f"sequential schedule: {exc}")
    try:
        rule_from_config(cfg["rule"]["kind"], cfg["rule"].get("rho"))
    except SeqestError as exc:
        violations.append(f"rule: {exc}")
    if shape is not None:
        for eps in _epsilons(run):
            if not 0.0 < eps < 1.0:
                violations.append(f"epsilon {eps} outside (0, 1)")
            elif eps >= shape.max_epsilon:
                violations.append(
                    f"epsilon {eps} not below the {shape.kind} shape's "
                    f"limit {shape.max_epsilon}"
                )
    if run["mode"] not in ("sequential", "multistage", "fixed"):
        violations.append(f"run.mode {run['mode']!r} unknown")
    if int(run["trials"]) < 1:
        violations.append("run.trials must be >= 1")

    if violations:
        for v in violations:
            print(f"violation: {v}")
        return 1
    print("config ok")
    return 0


def _apply_assertions(cfg: dict, result) -> int:
    checks = cfg.get("assert", {})
    if not checks:
        return 0
    rows = result.rows if hasattr(result, "rows") else [result]
    last = rows[-1]
    failures = []
    if "coverage_min" in checks and last.coverage < float(checks["coverage_min"]):
        failures.append(
            f"coverage {last.coverage:.4f} < required {checks['coverage_min']}"
        )
    if "ratio_dev_max" in checks:
        dev = abs(last.ratio_EnN - 1.0)
        if dev > float(checks["ratio_dev_max"]):
            failures.append(
                f"|E[n]/N - 1| = {dev:.4f} > allowed {checks['ratio_dev_max']}"
            )
    if checks.get("risk_bound"):
        ok, slack = risk_bound_check(last)
        if not ok:
            failures.append(f"risk bound violated by {-slack:.4g}")
    for f in failures:
        print(f"assertion failed: {f}")
    return 1 if failures else 0


def cmd_run(cfg: dict, out_dir: Path) -> int:
    sim_cfg = build_sim_config(cfg)
    summary = run_trials(sim_cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_summary_csv([summary], out_dir / "run_summary.csv")
    if cfg["run"].get("per_trial"):
        write_trials_csv(summary, out_dir / "run_trials.csv")
    if cfg["report"]["figures"]:
        figures.run_figure(summary, out_dir / "run_hist.png")
    print(
        f"mode={summary.mode} eps={summary.epsilon:g} trials={summary.trials} "
        f"coverage={summary.coverage:.4f} "
        f"[{summary.coverage_lo:.4f}, {summary.coverage_hi:.4f}] "
        f"mean_n={summary.mean_n:.1f} ratio={summary.ratio_EnN:.4f} "
        f"trunc={summary.trunc_rate:.3g} wall={summary.wall_clock:.2f}s"
    )
    return _apply_assertions(cfg, summary)


def cmd_sweep(cfg: dict, out_dir: Path) -> int:
    sim_cfg = build_sim_config(cfg)
    result = sweep(sim_cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_summary_csv(result.rows, out_dir / "sweep_summary.csv",
                      sweep_result=result)
    if cfg["report"]["figures"]:
        figures.sweep_figure(result, out_dir / "sweep.png")
    for row, cd, rd in zip(result.rows, result.cov_devs(), result.ratio_devs()):
        print(
            f"eps={row.epsilon:g} coverage={row.coverage:.4f} "
            f"ratio={row.ratio_EnN:.4f} cov_dev={cd:.4f} ratio_dev={rd:.4f}"
        )
    return _apply_assertions(cfg, result)


def cmd_predict(cfg: dict, out_dir: Optional[Path]) -> int:
    shape = _build_shape(cfg)
    model, mu = _build_model(cfg)
    mu_t, nu_t = true_params(model, mu)
    sc = cfg["schedule"]
    stage = StageSchedule(
        sc["family"], float(sc["delta"]), c_ratio=float(sc["C_ratio"]),
        delta_ell_mode=sc["delta_ell_mode"], cap_n=int(sc["cap_n"]),
    )
    eps = _epsilons(cfg["run"])[0]
    report = predict(eps, float(sc["delta"]), mu_t, nu_t, shape, stage,
                     l_max=int(cfg["run"]["l_cap"]))
    print(report.to_text())
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "predict.csv"
        with open(path, "w", newline="") as fh:
            fh.write(",".join(AsymptoticReport.csv_header()) + "\n")
            fh.write(",".join(report.to_csv_row()) + "\n")
    return 0


def cmd_rate_table(cfg: dict, out_dir: Path) -> int:
    model, mu = _build_model(cfg)
    if model.family == "opaque":
        print("rate-table needs a parametric model", file=sys.stderr)
        return 1
    points = int(cfg["table"]["points"])
    span = float(cfg["table"]["span"])
    lo_dom, hi_dom = model.mean_domain
    scale = max(1.0, abs(mu)) if math.isinf(hi_dom) else abs(mu)
    lo = max(lo_dom + 1e-6, mu - span * scale) if math.isfinite(lo_dom) \
        else mu - span * scale
    hi = min(hi_dom - 1e-6, mu + span * scale) if math.isfinite(hi_dom) \
        else mu + span * scale
    grid = [lo + (hi - lo) * i / (points - 1) for i in range(points)]
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "rate_table.csv"
    max_diff = 0.0
    with open(path, "w", newline="") as fh:
        fh.write("z,theta,closed,numeric,abs_diff\n")
        for z in grid:
            for th in grid:
                closed = rate(model, z, th)
                numeric = rate_numeric(model, z, th, tol=1e-10).value
                diff = abs(closed - numeric)
                max_diff = max(max_diff, diff)
                fh.write(
                    f"{z:.10g},{th:.10g},{closed:.12g},{numeric:.12g},{diff:.3g}\n"
                )
    print(f"rate table written to {path}; max |closed - numeric| = {max_diff:.3g}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="seqest",
        description="Sequential and multistage mean-estimation harness",
    )
    p.add_argument("command",
                   choices=["validate", "run", "sweep", "predict", "rate-table"])
    p.add_argument("--config", type=str, default=None, help="config file path")
    p.add_argument("--out", type=str, default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--trials", type=int, default=None, help="trial count")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (SEQEST_WORKERS as fallback)")
    p.add_argument("--override", action="append", default=[],
                   metavar="K=V", help="dotted config override, repeatable")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        for spec in args.override:
            apply_override(cfg, spec)
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.trials is not None:
            cfg["run"]["trials"] = args.trials
        if args.workers is not None:
            cfg["run"]["workers"] = args.workers
    except (OSError, tomli.TOMLDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out)
    try:
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "run":
            return cmd_run(cfg, out_dir)
        if args.command == "sweep":
            return cmd_sweep(cfg, out_dir)
        if args.command == "predict":
            return cmd_predict(cfg, out_dir if args.out != "." else None)
        if args.command == "rate-table":
            return cmd_rate_table(cfg, out_dir)
    except (ConfigError, ScheduleValidationError, DomainError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except SeqestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
