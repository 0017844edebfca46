"""
Linearized (variational) systems along a stored trajectory.

    v' = D v'' + A(t, x) v(t) + B(t, x) v(t - 1)

with A = D_y f and B = D_yd f evaluated on the trajectory at every grid time,
optionally restricted to one diagonal block of species. The propagation uses
the same IMEX stage and factorizations as the nonlinear solver, so finite
differences of the nonlinear scheme converge to it exactly.
"""
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import NumericalBlowupError, ShapeMismatchError, TrajectoryWindowError
from .model import DriverState, ProblemSpec, Segment
from .solver import (
    DiscreteDiffusionOperator,
    Integrator,
    SolverState,
    Trajectory,
    build_operator,
    grid_index,
)

COOPERATIVE_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class CoefficientPath:
    """A(t_k, x) and B(t_k, x) on the solver grid, shape (K, P, m, m)."""

    step: float
    species: tuple[int, ...]
    A: np.ndarray
    B: np.ndarray
    stationary: bool = False

    def __post_init__(self):
        if self.A.shape != self.B.shape or self.A.ndim != 4:
            raise ShapeMismatchError(f"coefficient arrays disagree: {self.A.shape} vs {self.B.shape}")
        m = len(self.species)
        if self.A.shape[2:] != (m, m):
            raise ShapeMismatchError(f"block of {m} species needs {m}x{m} matrices, got {self.A.shape[2:]}")

    @classmethod
    def constant(cls, problem: ProblemSpec, A, B, species: Optional[Iterable[int]] = None) -> "CoefficientPath":
        """Time-independent coefficients; A and B are (m, m) or per-node (P, m, m)."""
        species = tuple(range(problem.n)) if species is None else tuple(species)
        m = len(species)
        P = problem.mesh.points

        def lift(matrix):
            matrix = np.asarray(matrix, dtype=float)
            if matrix.ndim == 0:
                matrix = matrix.reshape(1, 1)
            return np.broadcast_to(matrix, (P, m, m))[None].copy()

        return cls(problem.step, species, lift(A), lift(B), stationary=True)

    @property
    def steps(self) -> Optional[int]:
        return None if self.stationary else self.A.shape[0]

    @property
    def horizon(self) -> float:
        return np.inf if self.stationary else self.A.shape[0] * self.step

    def at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        if self.stationary:
            return self.A[0], self.B[0]
        if k >= self.A.shape[0]:
            raise TrajectoryWindowError(
                f"coefficient path covers {self.A.shape[0]} steps, step {k} requested"
            )
        return self.A[k], self.B[k]

    def shifted(self, k0: int) -> "CoefficientPath":
        """The path seen from time k0 * h onward."""
        if self.stationary:
            return self
        return CoefficientPath(self.step, self.species, self.A[k0:], self.B[k0:])

    def cooperative_margin(self) -> float:
        """Smallest off-diagonal entry of A and entry of B (>= 0 for quasimonotone problems)."""
        m = len(self.species)
        off = ~np.eye(m, dtype=bool)
        lowest = np.min(self.B) if self.B.size else 0.0
        if m > 1:
            lowest = min(lowest, float(np.min(self.A[..., off])))
        return float(lowest)


def linearize_along(problem: ProblemSpec, trajectory: Trajectory,
                    block: Optional[Iterable[int]] = None) -> CoefficientPath:
    """Jacobians of f along the trajectory at every grid time on [0, T)."""
    if trajectory.dense is None:
        raise TrajectoryWindowError(
            "linearization needs every grid profile on [-1, T]; integrate with keep_history=True"
        )
    species = tuple(range(problem.n)) if block is None else tuple(block)
    h = problem.step
    M = problem.delay_steps
    x = problem.mesh.nodes
    K = trajectory.steps
    P = problem.mesh.points
    m = len(species)
    sel = np.ix_(range(P), species, species)
    A = np.empty((K, P, m, m))
    B = np.empty((K, P, m, m))
    for k in range(K):
        omega = trajectory.driver_at(k * h)
        jac_y, jac_d = problem.reaction.jacobians(omega, x, trajectory.dense[M + k], trajectory.dense[k])
        A[k] = jac_y[sel]
        B[k] = jac_d[sel]
    path = CoefficientPath(h, species, A, B)
    if problem.reaction.quasimonotone and K:
        margin = path.cooperative_margin()
        if margin < -COOPERATIVE_TOLERANCE:
            logging.warning(f"[Variational] Quasimonotone reaction produced a negative coupling {margin:.3g}")
    logging.debug(f"[Variational] Linearized {K} steps for species {species}")
    return path


class VariationalPropagator:
    """Steps the linear system one h at a time; keeps per-profile sup norms for renormalization."""

    def __init__(self, problem: ProblemSpec, path: CoefficientPath, psi: Segment,
                 operator: Optional[DiscreteDiffusionOperator] = None):
        problem.validate_segment(psi, species=path.species)
        self.problem = problem
        self.path = path
        self.operator = operator or build_operator(problem)
        self.state = SolverState.from_segment(psi, DriverState.autonomous(), problem.step)
        self.norms = np.max(np.abs(self.state.ring), axis=(1, 2))

    @property
    def time(self) -> float:
        return self.state.time

    def step(self) -> None:
        state = self.state
        A_k, B_k = self.path.at(state.step_index)
        current, delayed = state.newest, state.oldest
        forcing = np.einsum("pij,pj->pi", A_k, current) + np.einsum("pij,pj->pi", B_k, delayed)
        new = self.operator.imex_stage(self.path.species, current, forcing)
        peak = float(np.max(np.abs(new)))
        if not np.isfinite(peak):
            raise NumericalBlowupError(f"linearized solution overflowed after t={state.time:.6g}",
                                       last_time=state.time)
        state.push(new)
        self.norms[state.head] = peak

    def segment_norm(self) -> float:
        return float(np.max(self.norms))

    def profile_norm(self) -> float:
        return float(self.norms[self.state.head])

    def rescale(self, factor: float) -> None:
        self.state.scale(factor)
        self.norms *= abs(factor)


def integrate_variational(problem: ProblemSpec, path: CoefficientPath, psi: Segment, T: float,
                          snapshot_times: Iterable[float] = (), *, keep_history: bool = False,
                          operator: Optional[DiscreteDiffusionOperator] = None) -> Trajectory:
    h = problem.step
    M = problem.delay_steps
    steps = grid_index(T, h)
    wanted = {grid_index(s, h) for s in snapshot_times}
    if steps > path.horizon / h + 0.5:
        raise TrajectoryWindowError(f"coefficient path ends at t={path.horizon}, T={T} requested")

    propagator = VariationalPropagator(problem, path, psi, operator)
    state = propagator.state
    dense = None
    if keep_history:
        dense = np.empty((M + 1 + steps,) + psi.history.shape[1:])
        dense[:M + 1] = psi.history
    trajectory = Trajectory(problem, DriverState.autonomous(), path.species, {0: psi}, state, dense)
    for _ in range(steps):
        propagator.step()
        if dense is not None:
            dense[M + state.step_index] = state.newest
        if state.step_index in wanted:
            trajectory.snapshots[state.step_index] = state.segment()
    return trajectory


def directional_derivative_check(problem: ProblemSpec, omega: DriverState, phi: Segment, psi: Segment,
                                 t: float, eps: float,
                                 operator: Optional[DiscreteDiffusionOperator] = None) -> float:
    """Sup norm of (z_t(phi + eps psi) - z_t(phi)) / eps - v_t(phi, psi)."""
    integrator = Integrator(problem, operator=operator)
    base = integrator(omega, phi, t, keep_history=True)
    bumped = integrator(omega, phi + psi * eps, t, snapshot_times=[t])
    path = linearize_along(problem, base)
    v = integrate_variational(problem, path, psi, t, snapshot_times=[t], operator=integrator.operator)
    quotient = (bumped.segment_at(t).history - base.segment_at(t).history) / eps
    return float(np.max(np.abs(quotient - v.segment_at(t).history)))
