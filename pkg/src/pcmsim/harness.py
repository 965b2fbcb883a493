"""Experiment engine: scenario runs, trace statistics, benchmarks, scans.

All outputs are deterministic: CSV and JSON files from the same
configuration are byte-identical across runs, except for wall-time
fields, which are informational only (step and Newton-iteration counts
are the reproducible efficiency proxy).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ControllerConfig, DaeSystem, SimulationTrace, read_config
from .newton import NewtonSettings
from .steppers import MultistepHistory, fixed_step_integrate, itm_step, am2_implicit_step
from .step_control import pcm_integrate, vitm_integrate, vam2_integrate
from . import models

__all__ = [
    "ErrorStats",
    "Scenario",
    "METHODS",
    "build_system",
    "run",
    "write_trace_csv",
    "load_trace_csv",
    "error_stats_vs_exact",
    "compare_traces",
    "bench",
    "stability_scan",
    "scenario_from_entries",
]

METHODS = ("fitm", "fam2", "vitm", "vam2", "pcm")


@dataclass
class ErrorStats:
    """Max / mean / population variance of absolute differences."""

    max_diff: float
    avg_diff: float
    var_diff: float

    @classmethod
    def of(cls, diffs: np.ndarray) -> "ErrorStats":
        a = np.abs(np.asarray(diffs, dtype=float))
        return cls(float(a.max()), float(a.mean()), float(a.var()))

    def as_dict(self) -> dict:
        return {"max": self.max_diff, "avg": self.avg_diff, "var": self.var_diff}


@dataclass
class Scenario:
    """One integration run: a system, a method, and its configuration."""

    id: str
    system: str = "analytic"  # analytic | linear:<lambda> | swing:<fixture>
    method: str = "fitm"
    t_end: float = 10.0
    h0: float = 0.01
    fault: Optional[tuple] = None  # (bus, start, duration)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        kind = self.system.split(":", 1)[0]
        if kind not in ("analytic", "linear", "swing"):
            raise ValueError(f"unknown system {self.system!r}")
        self.controller.validate()
        self.newton.validate()


def build_system(scenario: Scenario) -> DaeSystem:
    spec = scenario.system
    if spec == "analytic":
        return models.analytic_system()
    if spec.startswith("linear:"):
        return models.linear_system(float(spec.split(":", 1)[1]))
    if spec == "swing" or spec.startswith("swing:"):
        fixture = spec.split(":", 1)[1] if ":" in spec else "wscc9"
        return models.swing_system(fixture, fault=scenario.fault)
    raise ValueError(f"unknown system {spec!r}")


def run(scenario: Scenario, out_csv=None, system: Optional[DaeSystem] = None) -> SimulationTrace:
    """Execute one scenario; optionally write the trace as CSV."""
    scenario.validate()
    if system is None:
        system = build_system(scenario)
    method = scenario.method
    cfg, ns = scenario.controller, scenario.newton
    if method == "fitm":
        trace = fixed_step_integrate("ITM", system, scenario.t_end, scenario.h0, ns)
    elif method == "fam2":
        trace = fixed_step_integrate("AM2", system, scenario.t_end, scenario.h0, ns)
    elif method == "vitm":
        trace = vitm_integrate(system, scenario.t_end, cfg, ns, h0=scenario.h0)
    elif method == "vam2":
        trace = vam2_integrate(system, scenario.t_end, cfg, ns, h0=scenario.h0)
    else:
        trace = pcm_integrate(system, scenario.t_end, cfg, ns, h0=scenario.h0)
    if out_csv is not None:
        write_trace_csv(out_csv, trace, system.labels())
    return trace


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace_csv(path, trace: SimulationTrace, labels: Sequence[str]) -> None:
    """Columns: t, h, newton_iters, g_max (empty when absent), variables."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "h", "newton_iters", "g_max", *labels])
        for rec in trace.records:
            g = "" if rec.g_max is None else _fmt(rec.g_max)
            writer.writerow(
                [
                    _fmt(rec.state.t),
                    _fmt(rec.state.h),
                    rec.newton_iterations,
                    g,
                    *(_fmt(v) for v in rec.state.full),
                ]
            )


def load_trace_csv(path):
    """Read a trace CSV back as (times, values matrix, variable labels)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        labels = header[4:]
        times, rows = [], []
        for row in reader:
            times.append(float(row[0]))
            rows.append([float(v) for v in row[4:]])
    return np.array(times), np.array(rows), labels


def error_stats_vs_exact(
    trace: SimulationTrace,
    exact: Callable[[float], float],
    value: Optional[Callable] = None,
    t_window: Optional[tuple[float, float]] = None,
) -> ErrorStats:
    """Absolute differences |value(record) - exact(t)| over the records.

    ``value`` extracts the compared scalar from a record's state (default:
    sum of the differential variables).  ``t_window`` optionally restricts
    the statistics to records with t in [t_lo, t_hi]; the initial record
    is included whenever it lies in the window.
    """
    if value is None:
        value = lambda state: float(np.sum(state.x))
    diffs = []
    for rec in trace.records:
        t = rec.state.t
        if t_window is not None and not (t_window[0] - 1e-12 <= t <= t_window[1] + 1e-12):
            continue
        diffs.append(value(rec.state) - exact(t))
    return ErrorStats.of(np.array(diffs))


def compare_traces(
    reference: SimulationTrace,
    candidate: SimulationTrace,
    variables: Optional[dict[str, Sequence[int]]] = None,
) -> dict[str, ErrorStats]:
    """Per-variable(-class) difference statistics on the reference grid.

    The candidate is linearly interpolated onto the reference record
    times.  ``variables`` maps names to column indices of the
    concatenated (x, y) state; default is one entry per column.
    """
    t_ref = reference.times()
    t_cand = candidate.times()
    if abs(t_ref[0] - t_cand[0]) > 1e-9 or abs(t_ref[-1] - t_cand[-1]) > 1e-9:
        raise ValueError(
            f"mismatched time ranges: [{t_ref[0]}, {t_ref[-1]}] vs "
            f"[{t_cand[0]}, {t_cand[-1]}]"
        )
    m_ref = reference.matrix()
    m_cand = candidate.matrix()
    if m_ref.shape[1] != m_cand.shape[1]:
        raise ValueError("traces record different numbers of variables")
    interp = np.column_stack(
        [np.interp(t_ref, t_cand, m_cand[:, j]) for j in range(m_cand.shape[1])]
    )
    diff = np.abs(interp - m_ref)
    if variables is None:
        variables = {f"var{j}": (j,) for j in range(m_ref.shape[1])}
    return {
        name: ErrorStats.of(diff[:, list(idx)]) for name, idx in variables.items()
    }


def bench(
    scenarios: Sequence[Scenario],
    reference_id: Optional[str] = None,
) -> dict:
    """Run scenarios, compare each against the reference, summarize.

    The reference defaults to the first scenario.  Efficiency improvement
    is (reference_steps - steps) / reference_steps, and analogously for
    Newton iterations; wall time is informational only.  When several
    scenarios share a method, per-class aggregates report both the max of
    per-scenario averages and the average of per-scenario maxima, labelled.
    """
    if not scenarios:
        raise ValueError("bench needs at least one scenario")
    scenarios = sorted(scenarios, key=lambda s: s.id)
    if reference_id is None:
        reference_id = scenarios[0].id
    by_id = {s.id: s for s in scenarios}
    if reference_id not in by_id:
        raise ValueError(f"reference scenario {reference_id!r} not in the set")

    traces: dict[str, SimulationTrace] = {}
    systems: dict[str, DaeSystem] = {}
    wall: dict[str, float] = {}
    for sc in scenarios:
        system = build_system(sc)
        start = time.perf_counter()
        traces[sc.id] = run(sc, system=system)
        wall[sc.id] = time.perf_counter() - start
        systems[sc.id] = system

    ref = traces[reference_id]
    ref_sys = systems[reference_id]
    rows = []
    for sc in scenarios:
        tr = traces[sc.id]
        classes = systems[sc.id].var_classes or None
        stats = compare_traces(ref, tr, classes)
        rows.append(
            {
                "scenario": sc.id,
                "method": sc.method,
                "system": sc.system,
                "accepted_steps": tr.accepted_steps,
                "total_newton_iterations": tr.total_newton_iterations,
                "wall_time_s": wall[sc.id],
                "efficiency_improvement_steps": (
                    (ref.accepted_steps - tr.accepted_steps) / ref.accepted_steps
                ),
                "efficiency_improvement_iterations": (
                    (ref.total_newton_iterations - tr.total_newton_iterations)
                    / max(ref.total_newton_iterations, 1)
                ),
                "diff_vs_reference": {k: v.as_dict() for k, v in stats.items()},
            }
        )

    summary = {
        "reference": reference_id,
        "comparison": "candidate linearly interpolated onto the reference time grid",
        "results": rows,
    }

    by_method: dict[str, list[dict]] = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(row)
    aggregates = {}
    for method, group in by_method.items():
        if len(group) < 2:
            continue
        classes = group[0]["diff_vs_reference"].keys()
        aggregates[method] = {
            name: {
                "max_of_scenario_averages": max(
                    g["diff_vs_reference"][name]["avg"] for g in group
                ),
                "average_of_scenario_maxima": float(
                    np.mean([g["diff_vs_reference"][name]["max"] for g in group])
                ),
            }
            for name in classes
        }
    if aggregates:
        summary["per_method_aggregates"] = aggregates
    return summary


def bench_text_table(summary: dict) -> str:
    """Aligned text rendering of a bench summary."""
    headers = ["scenario", "method", "steps", "newton", "eff.steps", "max|diff|", "wall[s]"]
    lines = [f"reference: {summary['reference']}"]
    body = []
    for row in summary["results"]:
        worst = max((s["max"] for s in row["diff_vs_reference"].values()), default=0.0)
        body.append(
            [
                row["scenario"],
                row["method"],
                str(row["accepted_steps"]),
                str(row["total_newton_iterations"]),
                f"{100 * row['efficiency_improvement_steps']:.2f}%",
                f"{worst:.4e}",
                f"{row['wall_time_s']:.3f}",
            ]
        )
    widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(headers)]
    lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def stability_scan(
    lambdas: Sequence[float],
    h: float,
    steps: int = 2000,
    settings: NewtonSettings = NewtonSettings(),
) -> list[dict]:
    """Boundedness verdicts for fixed-step 2-step Adams-Moulton on x' = l*x.

    Bootstraps with one trapezoidal step, then runs up to ``steps``
    Adams-Moulton steps; a run is 'bounded' iff max|x| stays within
    1.01*|x0|, and is cut short once |x| exceeds 10*|x0| (already
    divergent, and growth would eventually defeat the nonlinear solver's
    absolute tolerance).
    """
    if steps < 100:
        raise ValueError("need at least 100 steps for a meaningful verdict")
    out = []
    for lam in lambdas:
        if lam >= 0:
            raise ValueError("scan covers real negative lambda only")
        system = models.linear_system(lam)
        state = system.initial
        x0 = abs(float(state.x[0]))
        peak = x0
        history = MultistepHistory.invalid()
        for n in range(steps):
            if history.usable_at(h):
                outcome = am2_implicit_step(system, state, history, h, settings)
            else:
                outcome = itm_step(system, state, h, settings)
            history = MultistepHistory(outcome.f_new, outcome.f_from, h, True)
            state = outcome.state
            peak = max(peak, abs(float(state.x[0])))
            if peak > 10.0 * x0:
                break
        out.append(
            {
                "lambda": float(lam),
                "h": float(h),
                "h_lambda": float(lam * h),
                "peak_ratio": peak / x0,
                "verdict": "bounded" if peak <= 1.01 * x0 else "divergent",
                "final_x": float(state.x[0]),
                "final_t": float(state.t),
            }
        )
    return out


# --- scenario construction from config entries -----------------------------

_SCENARIO_KEYS = {
    "method",
    "system",
    "t_end",
    "h0",
    "fault",
    "out",
    "seed",
    "newton_tolerance",
    "newton_max_iterations",
    "newton_fd_epsilon",
}


def scenario_from_entries(entries: dict[str, str], scenario_id: str = "run") -> Scenario:
    """Build a scenario from config-file entries (keys mirror CLI flags)."""
    from .core import controller_from_config

    sc = Scenario(id=scenario_id, controller=controller_from_config(entries))
    if "method" in entries:
        sc.method = entries["method"].lower()
    if "system" in entries:
        sc.system = entries["system"]
    if "t_end" in entries:
        sc.t_end = float(entries["t_end"])
    if "h0" in entries:
        sc.h0 = float(entries["h0"])
    elif sc.method in ("vitm", "vam2", "pcm"):
        sc.h0 = sc.controller.h_min
    if "fault" in entries and entries["fault"]:
        bus, start, duration = entries["fault"].split(",")
        sc.fault = (int(bus), float(start), float(duration))
    ns = {}
    if "newton_tolerance" in entries:
        ns["tolerance"] = float(entries["newton_tolerance"])
    if "newton_max_iterations" in entries:
        ns["max_iterations"] = int(entries["newton_max_iterations"])
    if "newton_fd_epsilon" in entries:
        ns["fd_epsilon"] = float(entries["newton_fd_epsilon"])
    if ns:
        sc.newton = replace(sc.newton, **ns)
    sc.validate()
    return sc


def scenarios_from_file(path) -> tuple[list[Scenario], Optional[str]]:
    """Parse a bench scenario file.

    Plain text: optional top-level ``reference = <id>``, then one
    ``[section]`` per scenario with ``key = value`` lines (same keys as a
    run config).
    """
    sections: dict[str, dict[str, str]] = {}
    top: dict[str, str] = {}
    current = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                sections[current] = {}
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            (top if current is None else sections[current])[key] = value
    scenarios = [scenario_from_entries(entries, sid) for sid, entries in sections.items()]
    return scenarios, top.get("reference")
