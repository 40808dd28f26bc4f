"""Command-line entry points.

Subcommands:
  run            simulate one scenario, write trajectory.csv + metrics.json
  oracle         print the centralized solution per schedule segment
  counterexample run the 2-load boundary instance and report both candidate limits
  compare        run dgp / dual / none on one scenario and report nadir ordering
  check          validate a config without running

Exit codes: 0 ok, 2 configuration error, 3 simulation divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .errors import ConfigError, EstimatorDiverged, Infeasible, SimulationDiverged
from .estimator import check_prop1
from .graph import is_connected
from .ode_ref import boundary_counterexample, integrate
from .oracle import check_optimality, solve_primal
from .scenario import build_scenario, load_config
from .simulate import Metrics, run, write_trajectory_csv

_EXIT_CONFIG = 2
_EXIT_DIVERGED = 3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (SimulationDiverged, EstimatorDiverged) as exc:
        print(f"diverged at tick {getattr(exc, 'tick', '?')}: {exc}", file=sys.stderr)
        out = getattr(exc, "_flush_dir", None)
        traj = getattr(exc, "partial_trajectory", None)
        if out and traj is not None:
            path = os.path.join(out, "trajectory_partial.csv")
            write_trajectory_csv(traj, path)
            print(f"partial trajectory written to {path}", file=sys.stderr)
        return _EXIT_DIVERGED


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flexload",
        description="Smart-load frequency support simulator and verification tools",
    )
    sub = parser.add_subparsers(required=True)

    p_run = sub.add_parser("run", help="simulate one scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=".")
    p_run.add_argument("--algorithm", choices=("dgp", "dual", "none"), default=None)
    p_run.add_argument("--full-trace", action="store_true")
    p_run.add_argument("--plot", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle", help="centralized solution per schedule segment")
    p_oracle.add_argument("--config", required=True)
    p_oracle.add_argument("--out", default=None, help="optional CSV of per-load optima")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_ce = sub.add_parser("counterexample", help="2-load boundary-optimum instance")
    p_ce.set_defaults(func=_cmd_counterexample)

    p_cmp = sub.add_parser("compare", help="dgp vs dual vs none on one scenario")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--out", default=".")
    p_cmp.set_defaults(func=_cmd_compare)

    p_check = sub.add_parser("check", help="validate a config")
    p_check.add_argument("--config", required=True)
    p_check.set_defaults(func=_cmd_check)
    return parser


def _scenario_from_args(args, algorithm=None):
    doc = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        doc.setdefault("run", {})["master_seed"] = args.seed
    if algorithm is not None:
        doc.setdefault("algorithm", {})["kind"] = algorithm
    elif getattr(args, "algorithm", None) is not None:
        doc.setdefault("algorithm", {})["kind"] = args.algorithm
    if getattr(args, "full_trace", False):
        doc.setdefault("run", {})["full_trace"] = True
    return build_scenario(doc)


def _metrics_dict(metrics: Metrics) -> dict:
    def clean(v):
        return None if isinstance(v, float) and math.isnan(v) else v

    return {
        "windows": [
            {
                "start_s": w.start_s,
                "end_s": w.end_s,
                "nadir_hz": w.nadir_hz,
                "settling_time_s": clean(w.settling_time_s),
            }
            for w in metrics.windows
        ],
        "terminal_optimality_gap": clean(metrics.terminal_optimality_gap),
        "total_disutility_integral": metrics.total_disutility_integral,
    }


def _cmd_run(args) -> int:
    scenario = _scenario_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    try:
        traj, metrics = run(scenario)
    except (SimulationDiverged, EstimatorDiverged) as exc:
        exc._flush_dir = args.out
        raise
    csv_path = os.path.join(args.out, "trajectory.csv")
    write_trajectory_csv(traj, csv_path)
    with open(os.path.join(args.out, "metrics.json"), "w") as fh:
        json.dump(_metrics_dict(metrics), fh, indent=2)
        fh.write("\n")
    for w in metrics.windows:
        settle = "did not settle" if math.isnan(w.settling_time_s) else f"settled in {w.settling_time_s:.1f} s"
        print(
            f"window {w.start_s:6.1f}-{w.end_s:6.1f} s: nadir {w.nadir_hz:+.4f} Hz, {settle}"
        )
    print(f"total disutility integral: {metrics.total_disutility_integral:.4f}")
    print(f"trajectory: {csv_path}")
    if args.plot:
        _render_plots(csv_path, args.out)
    return 0


def _render_plots(csv_path, out_dir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = np.genfromtxt(csv_path, delimiter=",", names=True)
    panels = [
        ("freq_deviation", "frequency deviation (Hz)", "frequency.png"),
        ("u", "consumption-generation mismatch (MW)", "mismatch.png"),
        ("total_disutility", "total disutility", "disutility.png"),
    ]
    for column, label, fname in panels:
        fig, ax = plt.subplots(figsize=(7, 3.2))
        ax.plot(data["t"], data[column], lw=0.9)
        ax.set_xlabel("time (s)")
        ax.set_ylabel(label)
        ax.grid(alpha=0.4)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, fname), dpi=130)
        plt.close(fig)
    print(f"plots written to {out_dir}")


def _cmd_oracle(args) -> int:
    scenario = _scenario_from_args(args)
    rows = []
    for start, level in scenario.schedule.steps:
        delta_g = level - scenario.g_star
        print(f"segment from t = {start * scenario.T:.1f} s: generation {level} MW "
              f"(deviation {delta_g:+.3f} MW)")
        try:
            sol = solve_primal(scenario.specs, delta_g)
        except Infeasible as exc:
            print(f"  no solution: {exc}")
            continue
        x = sol.x_star
        print(f"  optimal gradient: {sol.lambda_star:.6g}")
        print(f"  optimal cost:     {sol.optimal_cost:.6g}")
        print(f"  strictly feasible: {sol.is_strictly_feasible}")
        print(f"  deviations (MW): min {x.min():.4g}, median {np.median(x):.4g}, "
              f"max {x.max():.4g}, sum {x.sum():.6g}")
        rows.append((start, level, sol))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("segment_start_tick,generation,load,x_star\n")
            for start, level, sol in rows:
                for i, v in enumerate(sol.x_star):
                    fh.write(f"{start},{level},{i + 1},{v!r}\n")
        print(f"per-load optima: {args.out}")
    return 0


def _cmd_counterexample(args) -> int:
    cfg = boundary_counterexample()
    traj = integrate(cfg, [0.1, 0.1])
    terminal = traj.terminal()
    optimum = np.array([0.25, 0.75])
    attractor = np.array([0.25, 5.0 / 12.0])
    sol = solve_primal(cfg.specs, cfg.g_bar)
    print("2-load instance: boxes [0, 1/4] x [0, 1], target 1, c = 1")
    print(f"flow terminal state: [{terminal[0]:.6f}, {terminal[1]:.6f}]")
    print(f"distance to optimum    [0.25, 0.75]:    {np.max(np.abs(terminal - optimum)):.2e}")
    print(f"distance to attractor  [0.25, 0.41667]: {np.max(np.abs(terminal - attractor)):.2e}")
    report = check_optimality(cfg.specs, terminal, cfg.g_bar, tol=1e-6)
    print(f"terminal point optimal: {report.ok}")
    for v in report.violations:
        print(f"  {v}")
    print(f"centralized optimum: [{sol.x_star[0]:.6f}, {sol.x_star[1]:.6f}], "
          f"strictly feasible: {sol.is_strictly_feasible}")
    print("the flow settles at a non-optimal point: strict feasibility matters")
    return 0


def _cmd_compare(args) -> int:
    results = {}
    for alg in ("dgp", "dual", "none"):
        try:
            scenario = _scenario_from_args(args, algorithm=alg)
        except ConfigError as exc:
            results[alg] = ("inapplicable", str(exc))
            continue
        traj, metrics = run(scenario)
        results[alg] = ("ok", (traj, metrics))
    os.makedirs(args.out, exist_ok=True)
    _write_compare_csv(results, os.path.join(args.out, "comparison.csv"))
    report_path = os.path.join(args.out, "ordering_report.txt")
    lines = _ordering_report(results)
    with open(report_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"report: {report_path}")
    return 0


def _write_compare_csv(results, path):
    ok = {alg: payload for alg, (status, payload) in results.items() if status == "ok"}
    if not ok:
        return
    first = next(iter(ok.values()))[0]
    ticks = first.completed_ticks
    header = ["k", "t"]
    series = []
    for alg, (traj, _) in ok.items():
        for col in ("freq_deviation", "u", "total_disutility"):
            header.append(f"{col}_{alg}")
            series.append(traj.columns[col])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        ks = first.columns["k"]
        ts = first.columns["t"]
        for i in range(ticks):
            vals = [ks[i], ts[i]] + [s[i] for s in series]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def _ordering_report(results) -> list[str]:
    lines = []
    nadirs = {}
    for alg, (status, payload) in results.items():
        if status != "ok":
            lines.append(f"{alg}: not run ({payload})")
            continue
        _, metrics = payload
        nadirs[alg] = [w.nadir_hz for w in metrics.windows]
        per_window = ", ".join(
            f"[{w.start_s:.0f}-{w.end_s:.0f}s] {w.nadir_hz:+.4f} Hz" for w in metrics.windows
        )
        lines.append(f"{alg}: nadir per window: {per_window}")
    if "dgp" in nadirs and "none" in nadirs:
        verdict = all(
            abs(d) < abs(n) for d, n in zip(nadirs["dgp"], nadirs["none"])
        )
        lines.append(f"|nadir(dgp)| < |nadir(none)| in every window: {verdict}")
    if "dgp" in nadirs and "dual" in nadirs:
        verdict = all(
            abs(d) <= abs(n) for d, n in zip(nadirs["dgp"], nadirs["dual"])
        )
        lines.append(f"|nadir(dgp)| <= |nadir(dual)| in every window: {verdict}")
    return lines


def _cmd_check(args) -> int:
    scenario = _scenario_from_args(args)
    model = scenario.model
    print(f"loads:      {scenario.n} ({scenario.specs[0].family.value})")
    print(f"graph:      connected = {is_connected(scenario.topology)}")
    print(f"plant:      spectral radius = {model.spectral_radius():.6f}, "
          f"CB = {model.cb():.3e} Hz/MW")
    print(f"observer:   error dynamics stable = {check_prop1(model)}")
    cap_lo = sum(s.box_lo for s in scenario.specs)
    cap_hi = sum(s.box_hi for s in scenario.specs)
    for start, level in scenario.schedule.steps:
        delta_g = level - scenario.g_star
        feasible = cap_lo <= delta_g <= cap_hi
        print(f"segment t >= {start * scenario.T:.0f} s: deviation {delta_g:+.1f} MW, "
              f"within aggregate box [{cap_lo:.1f}, {cap_hi:.1f}]: {feasible}")
    print(f"algorithm:  {scenario.algorithm}, c = {scenario.sched.c}, "
          f"gamma0 = {scenario.sched.gamma0:.6g}, exponent = {scenario.sched.exponent}")
    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
