"""Damping-free Newton's method with finite-difference Jacobians.

Used for the nonlinear algebraic system produced by each implicit
integration step.  The Jacobian is recomputed every iteration (full
Newton): chord variants would change iteration counts, and the iteration
count is the control signal of the convergence-driven step policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

__all__ = [
    "NewtonSettings",
    "NewtonResult",
    "NonConvergence",
    "SingularJacobian",
    "numeric_jacobian",
    "solve",
]

# pivot magnitudes below this fraction of the matrix infinity norm are
# treated as a singular Jacobian
_PIVOT_RTOL = 1e-12


@dataclass(frozen=True)
class NewtonSettings:
    tolerance: float = 1e-8
    max_iterations: int = 20
    fd_epsilon: float = 1e-7

    def validate(self) -> None:
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.fd_epsilon <= 0:
            raise ValueError("fd_epsilon must be > 0")


@dataclass
class NewtonResult:
    solution: np.ndarray
    iterations: int
    converged: bool
    final_residual: float


class NonConvergence(RuntimeError):
    """max_iterations exhausted; carries the best iterate seen."""

    def __init__(self, best: NewtonResult):
        super().__init__(
            f"Newton did not converge in {best.iterations} iterations "
            f"(residual {best.final_residual:.3e})"
        )
        self.best = best


class SingularJacobian(RuntimeError):
    """Linear solve failed; the caller should reject/retry at smaller h."""


def numeric_jacobian(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    fd_epsilon: float = 1e-7,
) -> np.ndarray:
    """Forward finite-difference Jacobian of ``residual_fn`` at ``point``.

    Column i uses a perturbation of ``fd_epsilon * max(1, |point_i|)``.
    """
    point = np.asarray(point, dtype=float)
    r0 = np.atleast_1d(np.asarray(residual_fn(point), dtype=float))
    jac = np.empty((r0.size, point.size))
    for i in range(point.size):
        step = fd_epsilon * max(1.0, abs(point[i]))
        perturbed = point.copy()
        perturbed[i] += step
        jac[:, i] = (np.asarray(residual_fn(perturbed), dtype=float) - r0) / step
    return jac


def _lu_solve(jac: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(jac)):
        raise SingularJacobian("non-finite entries in Jacobian")
    norm = np.max(np.sum(np.abs(jac), axis=1)) if jac.size else 0.0
    lu, piv = scipy.linalg.lu_factor(jac, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if norm == 0.0 or np.min(pivots) < _PIVOT_RTOL * norm:
        raise SingularJacobian(
            f"pivot {np.min(pivots):.3e} below {_PIVOT_RTOL:.0e} * |J|={norm:.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)


def solve(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    guess: np.ndarray,
    settings: NewtonSettings = NewtonSettings(),
) -> NewtonResult:
    """Solve residual_fn(z) = 0 by full Newton iteration from ``guess``.

    Convergence is declared when the residual infinity norm drops to
    ``settings.tolerance``; ``iterations`` counts completed Newton updates.
    Deterministic: identical inputs give bit-identical results.
    """
    settings.validate()
    z = np.array(guess, dtype=float)
    residual = np.atleast_1d(np.asarray(residual_fn(z), dtype=float))
    if residual.size != z.size:
        raise ValueError(
            f"residual length {residual.size} != unknown length {z.size}"
        )
    rnorm = float(np.max(np.abs(residual))) if residual.size else 0.0
    best = NewtonResult(z.copy(), 0, False, rnorm)
    for iteration in range(1, settings.max_iterations + 1):
        if rnorm <= settings.tolerance:
            return NewtonResult(z, iteration - 1, True, rnorm)
        jac = numeric_jacobian(residual_fn, z, settings.fd_epsilon)
        z = z - _lu_solve(jac, residual)
        residual = np.atleast_1d(np.asarray(residual_fn(z), dtype=float))
        rnorm = float(np.max(np.abs(residual)))
        if rnorm < best.final_residual:
            best = NewtonResult(z.copy(), iteration, False, rnorm)
    if rnorm <= settings.tolerance:
        return NewtonResult(z, settings.max_iterations, True, rnorm)
    best = NewtonResult(best.solution, settings.max_iterations, False, best.final_residual)
    raise NonConvergence(best)
