"""Command-line interface.

Subcommands:
  simulate        run one scenario, write a CSV trace
  compare         difference statistics between two CSV traces
  bench           run a scenario file, write JSON + aligned text table
  stability-scan  boundedness verdicts on a lambda/h grid, write CSV

Config files use one ``key = value`` per line with ``#`` comments; keys
mirror the flags one-to-one (h_min, g_low, t_end, ...).  Flags override
config-file values.  ``--seed`` is reserved: every algorithm here is
deterministic.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, models, plots
from .core import read_config
from .harness import Scenario, scenario_from_entries

__all__ = ["main"]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--method", choices=harness.METHODS)
    p.add_argument("--system", help="analytic | linear:<lambda> | swing:<fixture>")
    p.add_argument("--h0", type=float, help="initial / fixed step length [s]")
    p.add_argument("--h-min", type=float, dest="h_min")
    p.add_argument("--h-max", type=float, dest="h_max")
    p.add_argument("--g-low", type=float, dest="g_low")
    p.add_argument("--g-high", type=float, dest="g_high")
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--fault", help="bus,start,duration")
    p.add_argument("--newton-tol", type=float, dest="newton_tolerance")
    p.add_argument("--newton-max-iter", type=int, dest="newton_max_iterations")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--seed", type=int, help="reserved; unused")
    p.add_argument("--plot", action="store_true", help="also render PNG figures")


def _entries_from_args(args) -> dict[str, str]:
    entries: dict[str, str] = {}
    if args.config:
        entries.update(read_config(args.config))
    for key in (
        "method",
        "system",
        "h0",
        "h_min",
        "h_max",
        "g_low",
        "g_high",
        "t_end",
        "fault",
        "newton_tolerance",
        "newton_max_iterations",
    ):
        value = getattr(args, key, None)
        if value is not None:
            entries[key] = str(value)
    return entries


def _cmd_simulate(args) -> int:
    entries = _entries_from_args(args)
    scenario = scenario_from_entries(entries, scenario_id="simulate")
    out = Path(args.out or entries.get("out") or f"{scenario.method}_trace.csv")
    system = harness.build_system(scenario)
    trace = harness.run(scenario, out_csv=out, system=system)
    print(
        f"{scenario.method} on {scenario.system}: {trace.accepted_steps} steps, "
        f"{trace.total_newton_iterations} Newton iterations -> {out}"
    )
    if args.plot:
        fig = out.with_suffix(".png")
        plots.trace_figure(fig, trace, system.labels(), title=f"{scenario.method} {scenario.system}")
        print(f"figure -> {fig}")
        if scenario.system == "analytic":
            errfig = out.with_name(out.stem + "_error.png")
            sys_ = models.analytic_system()
            plots.error_figure(errfig, {scenario.method: trace}, sys_.exact_sum)
            print(f"figure -> {errfig}")
    return 0


def _cmd_compare(args) -> int:
    t_a, m_a, labels_a = harness.load_trace_csv(args.reference)
    t_b, m_b, labels_b = harness.load_trace_csv(args.candidate)
    if labels_a != labels_b:
        print("error: traces record different variables", file=sys.stderr)
        return 2
    if abs(t_a[0] - t_b[0]) > 1e-9 or abs(t_a[-1] - t_b[-1]) > 1e-9:
        print("error: mismatched time ranges", file=sys.stderr)
        return 2
    stats = {}
    for j, lab in enumerate(labels_a):
        diff = np.abs(np.interp(t_a, t_b, m_b[:, j]) - m_a[:, j])
        stats[lab] = {
            "max": float(diff.max()),
            "avg": float(diff.mean()),
            "var": float(diff.var()),
        }
    payload = {
        "reference": str(args.reference),
        "candidate": str(args.candidate),
        "comparison": "candidate linearly interpolated onto the reference time grid",
        "stats": stats,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"stats -> {args.out}")
    else:
        print(text)
    return 0


def _cmd_bench(args) -> int:
    scenarios, reference = harness.scenarios_from_file(args.scenarios)
    summary = harness.bench(scenarios, reference_id=reference)
    out = Path(args.out or "bench")
    json_path = out.with_suffix(".json")
    txt_path = out.with_suffix(".txt")
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    table = harness.bench_text_table(summary)
    txt_path.write_text(table)
    print(table, end="")
    print(f"summary -> {json_path}, {txt_path}")
    if args.plot:
        fig = out.with_suffix(".png")
        plots.bench_figure(fig, summary)
        print(f"figure -> {fig}")
    return 0


def _cmd_stability_scan(args) -> int:
    lambdas = [float(s) for s in args.lambdas.split(",") if s.strip()]
    rows = harness.stability_scan(lambdas, args.h, args.steps)
    out = Path(args.out or "stability_scan.csv")
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "h", "h_lambda", "peak_ratio", "verdict"])
        for row in rows:
            writer.writerow(
                [
                    repr(row["lambda"]),
                    repr(row["h"]),
                    repr(row["h_lambda"]),
                    repr(row["peak_ratio"]),
                    row["verdict"],
                ]
            )
    for row in rows:
        print(f"h*lambda = {row['h_lambda']:+.4g}: {row['verdict']}")
    print(f"verdicts -> {out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pcmsim",
        description="Variable-step predictor-corrector simulation of DAE systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and write a CSV trace")
    _add_run_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="difference statistics between two CSV traces")
    p.add_argument("reference")
    p.add_argument("candidate")
    p.add_argument("--out", help="output JSON path (default: stdout)")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("bench", help="run a scenario file and summarize")
    p.add_argument("--scenarios", required=True, help="scenario file")
    p.add_argument("--out", help="output prefix (default: bench)")
    p.add_argument("--plot", action="store_true", help="also render a PNG summary")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("stability-scan", help="scan real negative lambda at fixed h")
    p.add_argument("--lambdas", required=True, help="comma-separated real negative values")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=_cmd_stability_scan)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
