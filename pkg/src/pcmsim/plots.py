"""Optional figure rendering next to the delimited output.

CSV remains the primary interface; these helpers render quick-look PNG
figures (trace variables, step-length profile, error curves) for report
directories.  All figures use the non-interactive Agg backend.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .core import SimulationTrace

__all__ = ["trace_figure", "error_figure", "bench_figure"]


def trace_figure(path, trace: SimulationTrace, labels: Sequence[str], title: str = "") -> None:
    """State variables and step-length profile over time."""
    t = trace.times()
    m = trace.matrix()
    h = np.array([r.state.h for r in trace.records])
    fig, (ax0, ax1) = plt.subplots(
        2, 1, figsize=(8, 6), sharex=True, height_ratios=[3, 1]
    )
    for j, lab in enumerate(labels):
        ax0.plot(t, m[:, j], lw=0.9, label=lab)
    if len(labels) <= 12:
        ax0.legend(fontsize=7, ncol=2)
    ax0.set_ylabel("state")
    ax0.set_title(title or trace.method)
    ax1.step(t, h, where="post", color="k", lw=0.9)
    ax1.set_ylabel("h [s]")
    ax1.set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def error_figure(
    path,
    traces: dict[str, SimulationTrace],
    exact: Callable[[float], float],
    value: Optional[Callable] = None,
    title: str = "error vs analytic solution",
) -> None:
    """Absolute error of the summed output against an analytic solution."""
    if value is None:
        value = lambda state: float(np.sum(state.x))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for name, trace in traces.items():
        t = trace.times()
        err = np.abs([value(r.state) - exact(r.state.t) for r in trace.records])
        ax.semilogy(t, np.maximum(err, 1e-18), lw=0.9, label=name)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("|error|")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def bench_figure(path, summary: dict) -> None:
    """Steps and worst difference per scenario from a bench summary."""
    rows = summary["results"]
    names = [r["scenario"] for r in rows]
    steps = [r["accepted_steps"] for r in rows]
    worst = [
        max((s["max"] for s in r["diff_vs_reference"].values()), default=0.0)
        for r in rows
    ]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))
    ax0.bar(names, steps, color="tab:blue")
    ax0.set_ylabel("accepted steps")
    ax0.tick_params(axis="x", rotation=30)
    ax1.bar(names, np.maximum(worst, 1e-18), color="tab:orange")
    ax1.set_yscale("log")
    ax1.set_ylabel("max |diff| vs reference")
    ax1.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
