import numpy as np
import pytest

import pcmsim as p
from pcmsim.core import DaeState, DaeSystem

FAULT = (5, 1.0, 0.1)


def make_zero_system(n=2):
    """f identically zero, no algebraic part."""
    return DaeSystem(
        n_diff=n,
        n_alg=0,
        f=lambda x, y, t: np.zeros(n),
        g=lambda x, y, t: np.empty(0),
        initial=DaeState(0.0, np.ones(n), np.empty(0)),
        name="zero",
    )


@pytest.fixture(scope="session")
def analytic_sys():
    return p.analytic_system()


@pytest.fixture(scope="session")
def swing_fitm_trace():
    sys_ = p.swing_system("wscc9", fault=FAULT)
    return p.fixed_step_integrate("ITM", sys_, 10.0, 0.01), sys_


@pytest.fixture(scope="session")
def swing_pcm_trace():
    sys_ = p.swing_system("wscc9", fault=FAULT)
    return p.pcm_integrate(sys_, 10.0), sys_


@pytest.fixture(scope="session")
def swing_vitm_trace():
    sys_ = p.swing_system("wscc9", fault=FAULT)
    return p.vitm_integrate(sys_, 10.0), sys_


@pytest.fixture(scope="session")
def analytic_fixed_traces(analytic_sys):
    """The four fixed-step runs over [0, 10] used by the error statistics."""
    out = {}
    for method in ("ITM", "AM2"):
        for h in (0.01, 0.001):
            out[(method, h)] = p.fixed_step_integrate(method, analytic_sys, 10.0, h)
    return out
