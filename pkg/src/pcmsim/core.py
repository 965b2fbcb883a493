"""Domain types shared by every other module.

The problem class is the semi-explicit DAE

    x' = f(x, y, t)
    0  = g(x, y, t)

with dense state vectors.  Fully implicit and higher-index DAEs are not
supported.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "DaeState",
    "DaeSystem",
    "Event",
    "ControllerConfig",
    "StepRecord",
    "SimulationTrace",
    "validate_system",
    "read_config",
    "write_config",
    "controller_from_config",
    "controller_to_config",
]


def _frozen(v) -> np.ndarray:
    a = np.array(v, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DaeState:
    """A time-stamped snapshot of all differential and algebraic variables.

    ``h`` is the step length used to reach this state (0.0 at the initial
    point).  Instances are immutable; the arrays are marked read-only.
    """

    t: float
    x: np.ndarray
    y: np.ndarray
    h: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", _frozen(self.y))

    @property
    def full(self) -> np.ndarray:
        """Concatenated (x, y) vector."""
        return np.concatenate([self.x, self.y])


@dataclass
class Event:
    """A scheduled, opaque mutation of the system's parameters.

    ``action`` must be reversible in the sense that the matching
    apply/revert pair restores the parameters bit-exactly (e.g. a fault
    application event paired with its clearing event).
    """

    time: float
    action: Callable[[], None]
    label: str = ""

    def apply(self) -> None:
        self.action()


@dataclass
class DaeSystem:
    """A semi-explicit DAE problem definition.

    ``f(x, y, t)`` returns the n_diff derivative vector, ``g(x, y, t)``
    the n_alg residual vector.  ``events`` mutate run-local parameters
    and must be strictly ordered in time.
    """

    n_diff: int
    n_alg: int
    f: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    initial: DaeState
    events: list[Event] = field(default_factory=list)
    name: str = ""
    x_labels: tuple[str, ...] = ()
    y_labels: tuple[str, ...] = ()
    # named groups of indices into the concatenated (x, y) vector,
    # used for per-variable-class comparison statistics
    var_classes: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def labels(self) -> tuple[str, ...]:
        xs = self.x_labels or tuple(f"x{i}" for i in range(self.n_diff))
        ys = self.y_labels or tuple(f"y{i}" for i in range(self.n_alg))
        return xs + ys


@dataclass
class ControllerConfig:
    """Thresholds and clamps for both step-control policies.

    ``g_low``/``g_high`` bound the infinity norm of the truncation-error
    estimate over the differential variables; ``iters_low``/``iters_high``
    bound the Newton iteration count of the convergence-driven policy.
    """

    h_min: float = 0.01
    h_max: float = 0.16
    g_low: float = 5e-5
    g_high: float = 5e-4
    iters_low: int = 10
    iters_high: int = 15
    grow_factor: float = 1.3
    shrink_factor: float = 0.9
    # knobs for sensitivity studies; defaults match the base policy
    reject_on_high_error: bool = False
    corrector_iterations: int = 1

    def validate(self) -> None:
        if not (0 < self.h_min <= self.h_max):
            raise ValueError("require 0 < h_min <= h_max")
        if not (0 < self.g_low < self.g_high):
            raise ValueError("require 0 < g_low < g_high")
        if not (self.iters_low < self.iters_high):
            raise ValueError("require iters_low < iters_high")
        if not (self.shrink_factor < 1 < self.grow_factor):
            raise ValueError("require shrink_factor < 1 < grow_factor")
        if self.corrector_iterations < 1:
            raise ValueError("require corrector_iterations >= 1")


@dataclass
class StepRecord:
    """One accepted integration step.

    ``state`` is the recorded result (always the trapezoidal predictor for
    the error-estimate-driven controller).  ``error_estimate`` is the
    per-variable truncation-error estimate, or None when no corrector was
    available; ``g_max`` is its infinity norm over the differential
    variables.  ``h_next`` is the step length chosen for the following step.
    """

    state: DaeState
    error_estimate: Optional[np.ndarray]
    g_max: Optional[float]
    newton_iterations: int
    h_next: float


@dataclass
class SimulationTrace:
    """Ordered sequence of accepted steps produced by one integration run."""

    method: str
    records: list[StepRecord]
    total_newton_iterations: int = 0
    accepted_steps: int = 0

    def times(self) -> np.ndarray:
        return np.array([r.state.t for r in self.records])

    def matrix(self) -> np.ndarray:
        """Row per record, columns = concatenated (x, y)."""
        return np.array([r.state.full for r in self.records])


def validate_system(system: DaeSystem, tolerance: float = 1e-8) -> list[str]:
    """Report structural problems with a DAE system; empty list if clean.

    Report-only: never raises for a malformed system.
    """
    issues: list[str] = []
    s0 = system.initial
    if len(s0.x) != system.n_diff:
        issues.append(
            f"dimension mismatch: len(initial.x)={len(s0.x)} != n_diff={system.n_diff}"
        )
    if len(s0.y) != system.n_alg:
        issues.append(
            f"dimension mismatch: len(initial.y)={len(s0.y)} != n_alg={system.n_alg}"
        )
    try:
        fv = np.atleast_1d(np.asarray(system.f(s0.x, s0.y, s0.t), dtype=float))
        if fv.shape != (system.n_diff,):
            issues.append(f"f output has shape {fv.shape}, expected ({system.n_diff},)")
    except Exception as exc:  # report, don't raise
        issues.append(f"f raised at the initial state: {exc!r}")
    try:
        gv = np.atleast_1d(np.asarray(system.g(s0.x, s0.y, s0.t), dtype=float))
        if gv.shape != (system.n_alg,):
            issues.append(f"g output has shape {gv.shape}, expected ({system.n_alg},)")
        elif system.n_alg and np.max(np.abs(gv)) > tolerance:
            issues.append(
                "inconsistent initial condition: "
                f"max|g|={np.max(np.abs(gv)):.3e} > {tolerance:.1e}"
            )
    except Exception as exc:
        issues.append(f"g raised at the initial state: {exc!r}")
    times = [e.time for e in system.events]
    if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
        issues.append("events unordered: event times must be strictly increasing")
    return issues


# --- plain-text key = value configuration files ----------------------------


def read_config(path) -> dict[str, str]:
    """Parse a ``key = value`` file with ``#`` comments into a string dict."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_config(path, entries: dict) -> None:
    with open(path, "w") as fh:
        for key, value in entries.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            fh.write(f"{key} = {value}\n")


_CONTROLLER_FIELDS = {f.name: f.type for f in fields(ControllerConfig)}


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def controller_from_config(entries: dict[str, str]) -> ControllerConfig:
    """Build a ControllerConfig from config-file entries, applying defaults."""
    cfg = ControllerConfig()
    kwargs = {}
    for name in _CONTROLLER_FIELDS:
        if name not in entries:
            continue
        current = getattr(cfg, name)
        raw = entries[name]
        if isinstance(current, bool):
            kwargs[name] = _parse_bool(raw)
        elif isinstance(current, int):
            kwargs[name] = int(raw)
        else:
            kwargs[name] = float(raw)
    cfg = replace(cfg, **kwargs)
    cfg.validate()
    return cfg


def controller_to_config(cfg: ControllerConfig) -> dict:
    return {name: getattr(cfg, name) for name in _CONTROLLER_FIELDS}
