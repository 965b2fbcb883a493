"""Variable-step policies and drivers.

Two policies over the same clamp interval [h_min, h_max]:

* truncation-error-driven: the trapezoidal predictor is compared against
  the explicit Adams-Moulton corrector; the infinity norm of the
  difference decides whether the next step doubles, halves, or stays.
  Only the predictor is recorded, so the corrector contributes no
  accumulated error.
* iteration-count-driven: the Newton iteration count of the implicit
  solve scales the next step by grow_factor / shrink_factor.

Decisions pick the NEXT step length; a step is never rejected on the
error signal alone (the optional ``reject_on_high_error`` knob enables
rejection for sensitivity studies).  Newton failure is the only other
rejection path: one retry at half the step, then failure.
"""

from __future__ import annotations

import numpy as np

from . import newton
from .core import ControllerConfig, DaeSystem, SimulationTrace, StepRecord
from .newton import NewtonSettings
from .steppers import (
    _TIME_SNAP,
    _KahanClock,
    _pending_events,
    MultistepHistory,
    StepFailure,
    am2_corrector,
    am2_implicit_step,
    itm_step,
)

__all__ = [
    "StepRecord",
    "truncation_error",
    "pcm_decide",
    "iteration_decide",
    "pcm_integrate",
    "vitm_integrate",
    "vam2_integrate",
]


def truncation_error(predictor_x: np.ndarray, corrector_x: np.ndarray):
    """Elementwise corrector - predictor and its infinity norm."""
    predictor_x = np.asarray(predictor_x, dtype=float)
    corrector_x = np.asarray(corrector_x, dtype=float)
    if predictor_x.shape != corrector_x.shape:
        raise ValueError(
            f"length mismatch: {predictor_x.shape} vs {corrector_x.shape}"
        )
    estimate = corrector_x - predictor_x
    return estimate, float(np.max(np.abs(estimate))) if estimate.size else 0.0


def pcm_decide(g_max: float, h: float, cfg: ControllerConfig) -> float:
    """Next step length from the truncation-error estimate."""
    if g_max < cfg.g_low:
        return min(2.0 * h, cfg.h_max)
    if g_max > cfg.g_high:
        return max(h / 2.0, cfg.h_min)
    return h


def iteration_decide(iterations: int, h: float, cfg: ControllerConfig) -> float:
    """Next step length from the Newton iteration count."""
    if iterations < cfg.iters_low:
        return min(cfg.grow_factor * h, cfg.h_max)
    if iterations > cfg.iters_high:
        return max(cfg.shrink_factor * h, cfg.h_min)
    return h


def _variable_integrate(
    system: DaeSystem,
    t_end: float,
    cfg: ControllerConfig,
    settings: NewtonSettings,
    mode: str,
    h0: float | None,
) -> SimulationTrace:
    cfg.validate()
    h = cfg.h_min if h0 is None else min(max(h0, cfg.h_min), cfg.h_max)
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
        truncated = clock.t + h >= target - _TIME_SNAP
        h_use = (target - clock.t) if truncated else h

        saved_clock = (clock.t, clock._c)
        outcome = None
        for attempt in (0, 1):
            use_am2 = mode == "vam2" and history.usable_at(h_use)
            t_new = clock.snap(target) if truncated else clock.advance(h_use)
            try:
                if use_am2:
                    outcome = am2_implicit_step(
                        system, state, history, h_use, settings, t_new
                    )
                else:
                    outcome = itm_step(
                        system, state, h_use, settings, t_new, f_from=f_curr
                    )
                break
            except (newton.NonConvergence, newton.SingularJacobian) as exc:
                clock.t, clock._c = saved_clock
                if attempt == 1 or h_use <= cfg.h_min * (1.0 + 1e-12):
                    raise StepFailure(mode.upper(), state.t, exc) from exc
                h_use = max(h_use / 2.0, cfg.h_min)
                truncated = False
        assert outcome is not None

        estimate = None
        g_max = None
        if mode == "pcm" and history.usable_at(h_use):
            corrected = am2_corrector(
                state,
                outcome,
                history,
                h_use,
                system=system,
                iterations=cfg.corrector_iterations,
            )
            estimate, g_max = truncation_error(outcome.state.x, corrected)
            if (
                cfg.reject_on_high_error
                and g_max > cfg.g_high
                and not truncated
                and h_use > cfg.h_min * (1.0 + 1e-12)
            ):
                clock.t, clock._c = saved_clock
                h = max(h_use / 2.0, cfg.h_min)
                history = MultistepHistory.invalid()
                continue

        # step-length decision: only when the step ran at the nominal length
        iters = outcome.newton.iterations
        if not truncated and h_use == h:
            if mode == "pcm":
                if g_max is not None:
                    h = pcm_decide(g_max, h_use, cfg)
            else:
                h = iteration_decide(iters, h_use, cfg)
        elif not truncated:
            h = h_use  # retry shrank the step; keep the smaller length

        history = MultistepHistory(outcome.f_new, outcome.f_from, h_use, True)
        if h != h_use:
            history = MultistepHistory.invalid()
        f_curr = outcome.f_new
        state = outcome.state
        total_iters += iters
        records.append(StepRecord(state, estimate, g_max, iters, h))

        while ev < len(events) and events[ev].time <= clock.t + _TIME_SNAP:
            events[ev].apply()
            history = MultistepHistory.invalid()
            f_curr = None
            h = cfg.h_min
            records[-1].h_next = h
            ev += 1
    return SimulationTrace(
        method=mode,
        records=records,
        total_newton_iterations=total_iters,
        accepted_steps=len(records) - 1,
    )


def pcm_integrate(
    system: DaeSystem,
    t_end: float,
    cfg: ControllerConfig = ControllerConfig(),
    settings: NewtonSettings = NewtonSettings(),
    h0: float | None = None,
) -> SimulationTrace:
    """Predictor-corrector variable-step integration.

    Every step is a trapezoidal solve; where uniform two-step derivative
    history exists, the Adams-Moulton corrector yields a truncation-error
    estimate that tunes the next step.  Recorded states are always the
    trapezoidal predictors.
    """
    return _variable_integrate(system, t_end, cfg, settings, "pcm", h0)


def vitm_integrate(
    system: DaeSystem,
    t_end: float,
    cfg: ControllerConfig = ControllerConfig(),
    settings: NewtonSettings = NewtonSettings(),
    h0: float | None = None,
) -> SimulationTrace:
    """Variable-step trapezoidal integration driven by Newton iteration counts."""
    return _variable_integrate(system, t_end, cfg, settings, "vitm", h0)


def vam2_integrate(
    system: DaeSystem,
    t_end: float,
    cfg: ControllerConfig = ControllerConfig(),
    settings: NewtonSettings = NewtonSettings(),
    h0: float | None = None,
) -> SimulationTrace:
    """Variable-step Adams-Moulton integration driven by Newton iteration counts.

    Bootstraps with trapezoidal steps at t0, after events, and after every
    step-length change (the multistep formula needs uniform history).
    """
    return _variable_integrate(system, t_end, cfg, settings, "vam2", h0)
