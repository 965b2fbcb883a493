"""Single-step implicit kernels and the fixed-step drivers.

Two kernels: the implicit trapezoidal rule

    x_{n+1} = x_n + h [f_{n+1} + f_n] / 2

and the 2-step Adams-Moulton rule (uniform step only)

    x_{n+1} = x_n + h [5 f_{n+1} + 8 f_n - f_{n-1}] / 12

each solved jointly with g = 0 by Newton on the concatenated unknown
(x_{n+1}, y_{n+1}).  The explicit Adams-Moulton corrector evaluates the
same formula once at a converged trapezoidal predictor, without a Newton
solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import newton
from .core import DaeState, DaeSystem, SimulationTrace, StepRecord
from .newton import NewtonResult, NewtonSettings

__all__ = [
    "MultistepHistory",
    "StepOutcome",
    "InvalidHistory",
    "StepFailure",
    "itm_step",
    "am2_implicit_step",
    "am2_corrector",
    "fixed_step_integrate",
]

# slack for snapping a step onto an event time or t_end
_TIME_SNAP = 1e-12


class InvalidHistory(ValueError):
    """Multistep history missing or taken with a different step length."""


class StepFailure(RuntimeError):
    """An integration step failed; carries time and method context."""

    def __init__(self, method: str, t: float, cause: Exception):
        super().__init__(f"{method} step starting at t={t:.6g} failed: {cause}")
        self.method = method
        self.t = t
        self.cause = cause


@dataclass
class MultistepHistory:
    """Derivative data at the current and previous time stamps.

    Only valid when both vectors were produced on the same step length
    ``h_prev``; step-length changes and events invalidate it.
    """

    f_n: Optional[np.ndarray] = None
    f_nm1: Optional[np.ndarray] = None
    h_prev: float = 0.0
    valid: bool = False

    @classmethod
    def invalid(cls) -> "MultistepHistory":
        return cls()

    def usable_at(self, h: float) -> bool:
        return self.valid and self.h_prev == h


@dataclass
class StepOutcome:
    """Result of one implicit step: new state plus derivative data."""

    state: DaeState
    newton: NewtonResult
    f_new: np.ndarray
    f_from: np.ndarray


def _eval_f(system: DaeSystem, x, y, t) -> np.ndarray:
    return np.atleast_1d(np.asarray(system.f(x, y, t), dtype=float))


def _eval_g(system: DaeSystem, x, y, t) -> np.ndarray:
    if system.n_alg == 0:
        return np.empty(0)
    return np.atleast_1d(np.asarray(system.g(x, y, t), dtype=float))


def _solve_implicit(system, from_state, t_new, explicit_part, coeff_fnew, settings):
    """Newton-solve x = x_n + explicit_part + coeff_fnew*f(x,y,t_new), g = 0.

    Returns (x, y, NewtonResult, f_new) with x re-evaluated from the
    difference formula at the converged derivative, so that the recorded
    state satisfies the formula to rounding rather than merely to the
    Newton tolerance.
    """
    nx = system.n_diff
    x0, y0 = from_state.x, from_state.y

    def residual(u):
        x, y = u[:nx], u[nx:]
        r_x = x - x0 - explicit_part - coeff_fnew * _eval_f(system, x, y, t_new)
        return np.concatenate([r_x, _eval_g(system, x, y, t_new)])

    guess = np.concatenate([x0, y0])
    result = newton.solve(residual, guess, settings)
    x_sol, y_sol = result.solution[:nx], result.solution[nx:]
    f_new = _eval_f(system, x_sol, y_sol, t_new)
    x_out = x0 + explicit_part + coeff_fnew * f_new
    return x_out, y_sol, result, f_new


def itm_step(
    system: DaeSystem,
    from_state: DaeState,
    h: float,
    settings: NewtonSettings = NewtonSettings(),
    t_new: Optional[float] = None,
    f_from: Optional[np.ndarray] = None,
) -> StepOutcome:
    """Advance one implicit-trapezoidal step of length h.

    ``t_new`` overrides the arrival time for exact landing on event times;
    it must equal from_state.t + h up to accumulated rounding.  ``f_from``
    optionally reuses an already computed derivative at the start state,
    so drivers can keep predictor and corrector on identical float data.
    """
    if h <= 0:
        raise ValueError("step length must be positive")
    if t_new is None:
        t_new = from_state.t + h
    f0 = f_from if f_from is not None else _eval_f(
        system, from_state.x, from_state.y, from_state.t
    )
    x, y, result, f_new = _solve_implicit(
        system, from_state, t_new, (h / 2.0) * f0, h / 2.0, settings
    )
    return StepOutcome(DaeState(t_new, x, y, h), result, f_new, f0)


def am2_implicit_step(
    system: DaeSystem,
    from_state: DaeState,
    history: MultistepHistory,
    h: float,
    settings: NewtonSettings = NewtonSettings(),
    t_new: Optional[float] = None,
) -> StepOutcome:
    """Advance one fully implicit 2-step Adams-Moulton step of length h."""
    if h <= 0:
        raise ValueError("step length must be positive")
    if not history.usable_at(h):
        raise InvalidHistory(
            f"need derivative history at uniform step {h}, "
            f"have valid={history.valid} h_prev={history.h_prev}"
        )
    if t_new is None:
        t_new = from_state.t + h
    explicit = (h / 12.0) * (8.0 * history.f_n - history.f_nm1)
    x, y, result, f_new = _solve_implicit(
        system, from_state, t_new, explicit, 5.0 * h / 12.0, settings
    )
    return StepOutcome(DaeState(t_new, x, y, h), result, f_new, history.f_n)


def am2_corrector(
    from_state: DaeState,
    predictor: StepOutcome,
    history: MultistepHistory,
    h: float,
    system: Optional[DaeSystem] = None,
    iterations: int = 1,
) -> np.ndarray:
    """Explicit Adams-Moulton correction of a trapezoidal predictor.

    Evaluates x_n + h [5 f_hat + 8 f_n - f_{n-1}] / 12 with f_hat taken
    from the converged predictor; no Newton solve.  With ``iterations``
    > 1 the correction is re-applied, re-evaluating f_hat at the previous
    corrector (requires ``system``); the algebraic variables stay at the
    predictor's values throughout.
    """
    if not history.usable_at(h):
        raise InvalidHistory(
            f"need derivative history at uniform step {h}, "
            f"have valid={history.valid} h_prev={history.h_prev}"
        )
    if iterations > 1 and system is None:
        raise ValueError("repeated correction requires the system for f evaluations")
    f_hat = predictor.f_new
    corrected = from_state.x
    for _ in range(iterations):
        corrected = from_state.x + (h / 12.0) * (
            5.0 * f_hat + 8.0 * history.f_n - history.f_nm1
        )
        if system is not None and iterations > 1:
            f_hat = _eval_f(system, corrected, predictor.state.y, predictor.state.t)
    return corrected


class _KahanClock:
    """Compensated time accumulation so t stays on the exact grid."""

    def __init__(self, t0: float):
        self.t = t0
        self._c = 0.0

    def advance(self, h: float) -> float:
        y = h - self._c
        t_new = self.t + y
        self._c = (t_new - self.t) - y
        self.t = t_new
        return t_new

    def snap(self, t_exact: float) -> float:
        self.t = t_exact
        self._c = 0.0
        return t_exact


def _pending_events(system: DaeSystem, t0: float, t_end: float):
    return [e for e in system.events if t0 < e.time <= t_end + _TIME_SNAP]


def fixed_step_integrate(
    method: str,
    system: DaeSystem,
    t_end: float,
    h: float,
    settings: NewtonSettings = NewtonSettings(),
) -> SimulationTrace:
    """Integrate on a uniform grid with ITM or AM2.

    ``h`` must divide t_end - t0 and all event times within rounding.  AM2
    bootstraps with a trapezoidal step at t0 and after every event.
    """
    method = method.upper()
    if method not in ("ITM", "AM2"):
        raise ValueError(f"unknown fixed-step method {method!r}")
    if h <= 0:
        raise ValueError("step length must be positive")
    state = system.initial
    events = _pending_events(system, state.t, t_end)
    records = [StepRecord(state, None, None, 0, h)]
    history = MultistepHistory.invalid()
    clock = _KahanClock(state.t)
    f_curr = None  # derivative at the current state, when still valid
    total_iters = 0
    ev = 0
    while clock.t < t_end - _TIME_SNAP:
        target = events[ev].time if ev < len(events) else t_end
        if clock.t + h >= target - _TIME_SNAP:
            t_new = clock.snap(target)
        else:
            t_new = clock.advance(h)
        try:
            if method == "AM2" and history.usable_at(h):
                outcome = am2_implicit_step(system, state, history, h, settings, t_new)
            else:
                outcome = itm_step(system, state, h, settings, t_new, f_from=f_curr)
        except (newton.NonConvergence, newton.SingularJacobian) as exc:
            raise StepFailure(f"F{method}", state.t, exc) from exc
        history = MultistepHistory(outcome.f_new, outcome.f_from, h, True)
        f_curr = outcome.f_new
        state = outcome.state
        total_iters += outcome.newton.iterations
        records.append(StepRecord(state, None, None, outcome.newton.iterations, h))
        while ev < len(events) and events[ev].time <= clock.t + _TIME_SNAP:
            events[ev].apply()
            history = MultistepHistory.invalid()
            f_curr = None
            ev += 1
    return SimulationTrace(
        method=f"F{method}",
        records=records,
        total_newton_iterations=total_iters,
        accepted_steps=len(records) - 1,
    )
