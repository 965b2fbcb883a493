import numpy as np
import pytest

import pcmsim as p
from pcmsim.newton import NewtonSettings
from pcmsim.steppers import (
    InvalidHistory,
    MultistepHistory,
    StepFailure,
    am2_corrector,
    am2_implicit_step,
    fixed_step_integrate,
    itm_step,
)

from conftest import make_zero_system


def decay():
    return p.linear_system(-1.0)


def test_itm_step_matches_closed_form():
    # x' = -x, h = 0.1: x1 = (1 - h/2) / (1 + h/2) * x0
    sys_ = decay()
    out = itm_step(sys_, sys_.initial, 0.1)
    expected = (1 - 0.05) / (1 + 0.05)
    assert out.state.t == pytest.approx(0.1)
    assert out.state.x[0] == pytest.approx(expected, abs=1e-9)
    assert out.newton.converged


def test_itm_two_steps_closed_form():
    sys_ = decay()
    out1 = itm_step(sys_, sys_.initial, 0.1)
    out2 = itm_step(sys_, out1.state, 0.1, f_from=out1.f_new)
    r = (1 - 0.05) / (1 + 0.05)
    assert out2.state.x[0] == pytest.approx(r * r, abs=1e-9)


def test_am2_step_matches_closed_form():
    # second step by AM2 after an ITM bootstrap, z = h*lambda = -0.1:
    # x2 = (x1 (1 + 8z/12) - x0 z/12) / (1 - 5z/12)
    sys_ = decay()
    out1 = itm_step(sys_, sys_.initial, 0.1)
    history = MultistepHistory(out1.f_new, out1.f_from, 0.1, True)
    out2 = am2_implicit_step(sys_, out1.state, history, 0.1)
    z = -0.1
    x1 = out1.state.x[0]
    expected = (x1 * (1 + 8 * z / 12) - 1.0 * z / 12) / (1 - 5 * z / 12)
    assert out2.state.x[0] == pytest.approx(expected, abs=1e-9)


def test_am2_requires_uniform_history():
    sys_ = decay()
    out1 = itm_step(sys_, sys_.initial, 0.1)
    history = MultistepHistory(out1.f_new, out1.f_from, 0.1, True)
    with pytest.raises(InvalidHistory):
        am2_implicit_step(sys_, out1.state, history, 0.05)
    with pytest.raises(InvalidHistory):
        am2_implicit_step(sys_, out1.state, MultistepHistory.invalid(), 0.1)


def test_corrector_formula_identity():
    # the explicit corrector evaluates exactly
    # x_n + h [5 f_hat + 8 f_n - f_{n-1}] / 12 on the shared float data
    sys_ = decay()
    out1 = itm_step(sys_, sys_.initial, 0.1)
    history = MultistepHistory(out1.f_new, out1.f_from, 0.1, True)
    out2 = itm_step(sys_, out1.state, 0.1, f_from=out1.f_new)
    corrected = am2_corrector(out1.state, out2, history, 0.1)
    manual = out1.state.x + (0.1 / 12.0) * (
        5.0 * out2.f_new + 8.0 * history.f_n - history.f_nm1
    )
    assert np.array_equal(corrected, manual)


def test_corrector_rejects_invalid_history():
    sys_ = decay()
    out1 = itm_step(sys_, sys_.initial, 0.1)
    with pytest.raises(InvalidHistory):
        am2_corrector(sys_.initial, out1, MultistepHistory.invalid(), 0.1)


def test_corrector_repeat_requires_system():
    sys_ = decay()
    out1 = itm_step(sys_, sys_.initial, 0.1)
    history = MultistepHistory(out1.f_new, out1.f_from, 0.1, True)
    out2 = itm_step(sys_, out1.state, 0.1, f_from=out1.f_new)
    with pytest.raises(ValueError):
        am2_corrector(out1.state, out2, history, 0.1, iterations=2)
    # with the system the repeated correction stays close to the single one
    once = am2_corrector(out1.state, out2, history, 0.1, system=sys_)
    twice = am2_corrector(out1.state, out2, history, 0.1, system=sys_, iterations=2)
    assert abs(once[0] - twice[0]) < 1e-4


def test_step_rejects_nonpositive_h():
    sys_ = decay()
    with pytest.raises(ValueError):
        itm_step(sys_, sys_.initial, 0.0)
    with pytest.raises(ValueError):
        am2_implicit_step(sys_, sys_.initial, MultistepHistory.invalid(), -0.1)


def test_fixed_grid_lands_exactly_on_t_end():
    # 0.1 is inexact in binary; compensated accumulation keeps the grid exact
    trace = fixed_step_integrate("ITM", decay(), 10.0, 0.1)
    times = trace.times()
    assert times[-1] == 10.0
    assert trace.accepted_steps == 100
    np.testing.assert_allclose(np.diff(times), 0.1, rtol=0, atol=1e-12)


def test_fixed_itm_second_order_convergence(analytic_sys):
    errs = []
    for h in (0.02, 0.01):
        trace = fixed_step_integrate("ITM", analytic_sys, 1.0, h)
        diffs = [
            abs(float(np.sum(r.state.x)) - analytic_sys.exact_sum(r.state.t))
            for r in trace.records
        ]
        errs.append(max(diffs))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_fixed_am2_third_order_convergence():
    # the end-of-run error on slow scalar decay is free of the bootstrap
    # step's transient and shows the third-order halving ratio
    errs = []
    for h in (0.02, 0.01):
        trace = fixed_step_integrate("AM2", decay(), 1.0, h)
        errs.append(abs(float(trace.records[-1].state.x[0]) - np.exp(-1.0)))
    assert errs[0] / errs[1] == pytest.approx(8.0, rel=0.15)


def test_fixed_am2_bootstraps_with_itm():
    # the very first step must be trapezoidal, not Adams-Moulton
    trace = fixed_step_integrate("AM2", decay(), 0.2, 0.1)
    r_itm = (1 - 0.05) / (1 + 0.05)
    assert trace.records[1].state.x[0] == pytest.approx(r_itm, abs=1e-9)
    z = -0.1
    x1 = trace.records[1].state.x[0]
    expected = (x1 * (1 + 8 * z / 12) - z / 12) / (1 - 5 * z / 12)
    assert trace.records[2].state.x[0] == pytest.approx(expected, abs=1e-9)


def test_events_snap_and_rebootstrap():
    sys_ = make_zero_system()
    marks = []
    sys_.events = [p.Event(0.25, lambda: marks.append("hit"))]
    trace = fixed_step_integrate("AM2", sys_, 1.0, 0.1)
    times = trace.times()
    assert 0.25 in times
    assert marks == ["hit"]
    # grid resumes from the event time
    i = list(times).index(0.25)
    assert times[i + 1] == pytest.approx(0.35)


def test_fixed_method_validation():
    with pytest.raises(ValueError):
        fixed_step_integrate("RK4", decay(), 1.0, 0.1)
    with pytest.raises(ValueError):
        fixed_step_integrate("ITM", decay(), 1.0, -0.1)


def test_step_failure_carries_context():
    sys_ = p.linear_system(-1.0)

    def bad_f(x, y, t):
        return np.array([np.nan])

    sys_.f = bad_f
    with pytest.raises(StepFailure) as excinfo:
        fixed_step_integrate("ITM", sys_, 1.0, 0.1)
    assert excinfo.value.method == "FITM"
    assert excinfo.value.t == 0.0


def test_trace_method_names():
    assert fixed_step_integrate("ITM", decay(), 0.2, 0.1).method == "FITM"
    assert fixed_step_integrate("AM2", decay(), 0.2, 0.1).method == "FAM2"
