import numpy as np
import pytest

import pcmsim as p
from pcmsim.core import ControllerConfig, Event
from pcmsim.step_control import (
    iteration_decide,
    pcm_decide,
    pcm_integrate,
    truncation_error,
    vam2_integrate,
    vitm_integrate,
)
from pcmsim.steppers import StepFailure

from conftest import make_zero_system

CFG = ControllerConfig()


def test_truncation_error_elementwise_and_norm():
    est, g_max = truncation_error(np.array([1.0, 2.0]), np.array([1.5, 1.0]))
    np.testing.assert_array_equal(est, [0.5, -1.0])
    assert g_max == 1.0


def test_truncation_error_length_mismatch():
    with pytest.raises(ValueError):
        truncation_error(np.zeros(2), np.zeros(3))


def test_pcm_decide_thresholds():
    assert pcm_decide(1e-5, 0.02, CFG) == 0.04       # below g_low: double
    assert pcm_decide(1e-3, 0.08, CFG) == 0.04       # above g_high: halve
    assert pcm_decide(1e-4, 0.04, CFG) == 0.04       # in band: hold
    assert pcm_decide(1e-6, 0.16, CFG) == 0.16       # clamp at h_max
    assert pcm_decide(1.0, 0.01, CFG) == 0.01        # clamp at h_min


def test_iteration_decide_thresholds():
    assert iteration_decide(3, 0.1, CFG) == 1.3 * 0.1    # fast: grow
    assert iteration_decide(18, 0.1, CFG) == 0.9 * 0.1   # slow: shrink
    assert iteration_decide(12, 0.1, CFG) == 0.1         # in band: hold
    assert iteration_decide(2, 0.15, CFG) == 0.16        # clamp at h_max
    assert iteration_decide(20, 0.011, CFG) == 0.01      # clamp at h_min


def test_pcm_grows_to_clamp_on_zero_dynamics():
    # f == 0 gives a zero error estimate; every decided step doubles, and
    # each change invalidates the history, so growth happens every other step
    trace = pcm_integrate(make_zero_system(), 5.0)
    h_next = [r.h_next for r in trace.records]
    assert h_next[0] == 0.01
    assert CFG.h_max in h_next
    # monotone non-decreasing until the clamp
    upto = h_next.index(CFG.h_max)
    assert all(b >= a for a, b in zip(h_next[:upto], h_next[1 : upto + 1]))
    assert trace.accepted_steps < 0.2 * 500  # far fewer than fixed h_min steps


def test_pcm_records_estimate_only_with_history():
    trace = pcm_integrate(make_zero_system(), 1.0)
    # first step has no history; the second runs at an unchanged length
    assert trace.records[1].g_max is None
    with_est = [r for r in trace.records if r.g_max is not None]
    assert with_est
    assert all(r.g_max == 0.0 for r in with_est)
    assert all(np.array_equal(r.error_estimate, np.zeros(2)) for r in with_est)


def test_vitm_grows_by_factor_each_step():
    trace = vitm_integrate(make_zero_system(), 1.0)
    h_next = [r.h_next for r in trace.records]
    assert h_next[1] == pytest.approx(1.3 * 0.01)
    assert h_next[2] == pytest.approx(1.3 * 1.3 * 0.01)
    assert max(h_next) <= CFG.h_max


def test_vam2_matches_vitm_on_zero_dynamics():
    # f == 0: trapezoid and Adams-Moulton agree exactly, and the iteration
    # counts coincide, so the drivers must produce identical traces
    a = vitm_integrate(make_zero_system(), 2.0)
    b = vam2_integrate(make_zero_system(), 2.0)
    np.testing.assert_array_equal(a.times(), b.times())
    np.testing.assert_array_equal(a.matrix(), b.matrix())


def test_event_snaps_and_resets_step():
    sys_ = make_zero_system()
    marks = []
    sys_.events = [Event(1.0, lambda: marks.append("hit"))]
    trace = pcm_integrate(sys_, 2.0, h0=0.16)
    times = list(trace.times())
    assert 1.0 in times
    assert marks == ["hit"]
    i = times.index(1.0)
    assert trace.records[i].h_next == CFG.h_min
    assert times[i + 1] == pytest.approx(1.0 + CFG.h_min)


def test_h0_is_clamped():
    trace = vitm_integrate(make_zero_system(), 0.5, h0=1.0)
    assert trace.records[0].h_next == CFG.h_max
    trace = vitm_integrate(make_zero_system(), 0.5, h0=1e-5)
    assert trace.records[0].h_next == CFG.h_min


def test_newton_failure_retries_then_fails():
    calls = []

    def f(x, y, t):
        calls.append(t)
        if t > 0:
            return np.array([np.nan])
        return np.zeros(1)

    sys_ = p.linear_system(-1.0)
    sys_.f = f
    with pytest.raises(StepFailure):
        pcm_integrate(sys_, 1.0)


def test_retry_halves_step_on_transient_failure():
    # f poisons the solve at t = 0.08 until any later evaluation at an
    # earlier time disarms it; the driver must retry the first step at
    # half length and carry on from there
    state = {"armed": True, "tripped": False}

    def f(x, y, t):
        if state["armed"] and t > 0.05:
            state["tripped"] = True
            return np.array([np.inf])
        if state["tripped"]:
            state["armed"] = False
        return np.zeros(1)

    sys_ = p.linear_system(-1.0)
    sys_.f = f
    cfg = ControllerConfig(h_min=0.04, h_max=0.16)
    trace = pcm_integrate(sys_, 0.4, cfg=cfg, h0=0.08)
    assert not state["armed"]
    assert trace.records[1].state.t == pytest.approx(0.04)
    assert trace.records[1].state.h == pytest.approx(0.04)
    assert trace.times()[-1] == pytest.approx(0.4)


def test_pcm_analytic_step_profile(analytic_sys):
    trace = pcm_integrate(analytic_sys, 10.0)
    h_next = [r.h_next for r in trace.records]
    assert h_next[0] == CFG.h_min
    assert max(h_next) <= CFG.h_max
    assert min(h_next) >= CFG.h_min
    # decayed dynamics: the step eventually reaches the clamp
    assert h_next[-2] > 0.05
    # far fewer steps than fixed-step at h_min
    assert trace.accepted_steps < 400


def test_pcm_records_predictor_not_corrector(analytic_sys):
    # the recorded state must satisfy the trapezoid formula (the
    # predictor), never the corrected value; re-evaluating f at the
    # recorded states reproduces it to roughly the Newton tolerance,
    # far below the g_low/g_high band the corrector moves it by
    trace = pcm_integrate(analytic_sys, 1.0)
    taus = np.array(analytic_sys.taus)
    for prev, rec in zip(trace.records, trace.records[1:]):
        h = rec.state.t - prev.state.t
        f0 = -prev.state.x / taus
        f1 = -rec.state.x / taus
        lhs = rec.state.x
        rhs = prev.state.x + (h / 2.0) * (f0 + f1)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-6)


def test_reject_on_high_error_halves_and_retries():
    cfg = ControllerConfig(reject_on_high_error=True, g_high=1e-12, g_low=1e-13)
    trace = pcm_integrate(p.analytic_system(), 0.2, cfg=cfg, h0=0.04)
    # with an impossibly tight band every estimated step is rejected down
    # to h_min, so the run degenerates to (nearly) fixed minimum steps
    assert trace.times()[-1] == pytest.approx(0.2)
    assert max(r.state.h for r in trace.records[1:]) <= 0.04


def test_corrector_iterations_config_changes_estimate(analytic_sys):
    base = pcm_integrate(analytic_sys, 1.0)
    cfg = ControllerConfig(corrector_iterations=3)
    rep = pcm_integrate(analytic_sys, 1.0, cfg=cfg)
    g_base = [r.g_max for r in base.records if r.g_max is not None]
    g_rep = [r.g_max for r in rep.records if r.g_max is not None]
    assert g_base and g_rep
    assert g_base != g_rep
