"""Variable-step predictor-corrector time-domain simulation of DAE systems.

A trapezoidal predictor paired with a 2-step Adams-Moulton corrector
estimates the local truncation error of each step; the estimate tunes
the step length inside a hard clamp interval, while only the predictor
is ever recorded.  Fixed-step and Newton-iteration-count-driven variable
step baselines, built-in test systems, and a benchmark harness round out
the package.
"""

from .core import (
    ControllerConfig,
    DaeState,
    DaeSystem,
    Event,
    SimulationTrace,
    StepRecord,
    validate_system,
)
from .newton import NewtonResult, NewtonSettings, NonConvergence, SingularJacobian
from .steppers import (
    InvalidHistory,
    MultistepHistory,
    StepFailure,
    StepOutcome,
    am2_corrector,
    am2_implicit_step,
    fixed_step_integrate,
    itm_step,
)
from .step_control import (
    iteration_decide,
    pcm_decide,
    pcm_integrate,
    truncation_error,
    vam2_integrate,
    vitm_integrate,
)
from .models import (
    AnalyticSystem,
    EquilibriumNotFound,
    FaultSpec,
    analytic_system,
    linear_system,
    swing_system,
)
from .harness import (
    ErrorStats,
    Scenario,
    bench,
    compare_traces,
    error_stats_vs_exact,
    run,
    stability_scan,
)

__version__ = "0.1.0"
