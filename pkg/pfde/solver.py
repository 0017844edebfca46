"""
Method of lines in space, method of steps in time.

Each step is one IMEX stage of length h = 1/M: theta-weighted (Crank-Nicolson
by default) diffusion with the reaction evaluated explicitly at the current
profile and at the profile one delay back, read from a ring buffer.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu
from tqdm import tqdm

from .config import load_settings
from .errors import NumericalBlowupError, ShapeMismatchError, TimeNotAvailableError
from .model import BoundaryKind, DriverState, Mesh1D, ProblemSpec, Segment

THETA = 0.5
GRID_TOLERANCE = 1e-9


def grid_index(t: float, step: float) -> int:
    """Index k with k*h == t; t must lie on the solver grid."""
    k = int(round(t / step))
    if abs(k * step - t) > GRID_TOLERANCE * max(1.0, abs(t)):
        raise TimeNotAvailableError(f"t={t} is not a multiple of the time step {step}")
    return k


def diffusion_stencil(mesh: Mesh1D, diffusion: float, kind: BoundaryKind,
                      alpha: tuple[float, float] = (0.0, 0.0)) -> sparse.csr_matrix:
    """Second-order central differences for d u'' with the species' boundary closure.

    Neumann and Robin use ghost-node elimination; with u_x(0) = alpha_l u_0 the
    first row reads d * (2 (u_1 - u_0) / dx^2 - 2 alpha_l u_0 / dx), and likewise
    at x = l. Dirichlet rows are zero (boundary values stay pinned at 0).
    """
    n_int = mesh.intervals
    dx = mesh.spacing
    main = np.full(n_int + 1, -2.0)
    upper = np.ones(n_int)
    lower = np.ones(n_int)
    if kind is BoundaryKind.DIRICHLET:
        main[[0, -1]] = 0.0
        upper[0] = 0.0
        lower[-1] = 0.0
    else:
        upper[0] = 2.0
        lower[-1] = 2.0
        if kind is BoundaryKind.ROBIN:
            main[0] -= 2.0 * alpha[0] * dx
            main[-1] -= 2.0 * alpha[1] * dx
    stencil = sparse.diags([lower, main, upper], [-1, 0, 1], format="csr")
    return (diffusion / dx**2) * stencil


def quadrature_weights(mesh: Mesh1D) -> np.ndarray:
    """Trapezoidal weights; the Neumann/Robin stencils are symmetric in this inner product."""
    weights = np.full(mesh.points, mesh.spacing)
    weights[[0, -1]] *= 0.5
    return weights


@dataclass(frozen=True, eq=False)
class DiscreteDiffusionOperator:
    step: float
    theta: float
    stencils: tuple[sparse.csr_matrix, ...]
    explicit: tuple[sparse.csr_matrix, ...]
    implicit: tuple
    pinned: tuple[bool, ...]

    def apply(self, species: int, profile: np.ndarray) -> np.ndarray:
        return self.stencils[species] @ profile

    def stage(self, species: int, profile: np.ndarray, forcing: np.ndarray,
              decay: float = 0.0) -> np.ndarray:
        """(I - h theta L) u_new = (I + h (1 - theta) L) u + h (forcing - decay * u)."""
        rhs = self.explicit[species] @ profile + self.step * forcing
        if decay:
            rhs -= self.step * decay * profile
        if self.pinned[species]:
            rhs[[0, -1]] = 0.0
        out = self.implicit[species].solve(rhs)
        if self.pinned[species]:
            out[[0, -1]] = 0.0
        return out

    def imex_stage(self, species: Iterable[int], current: np.ndarray, forcing: np.ndarray) -> np.ndarray:
        new = np.empty_like(current)
        for k, i in enumerate(species):
            new[:, k] = self.stage(i, current[:, k], forcing[:, k])
        return new


def build_operator(problem: ProblemSpec, theta: float = THETA) -> DiscreteDiffusionOperator:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    h = problem.step
    identity = sparse.identity(problem.mesh.points, format="csr")
    stencils, explicit, implicit = [], [], []
    for i in range(problem.n):
        L = diffusion_stencil(problem.mesh, problem.diffusion[i], problem.boundary.kinds[i],
                              problem.boundary.robin_alpha[i])
        stencils.append(L)
        explicit.append((identity + h * (1.0 - theta) * L).tocsr())
        implicit.append(splu((identity - h * theta * L).tocsc()))
    pinned = tuple(problem.boundary.is_dirichlet(i) for i in range(problem.n))
    logging.debug(f"[Solver] Built diffusion operator: n={problem.n}, N={problem.mesh.intervals}, "
                  f"h={h:.4g}, theta={theta}")
    return DiscreteDiffusionOperator(h, theta, tuple(stencils), tuple(explicit), tuple(implicit), pinned)


def monotone_step_ratio(problem: ProblemSpec, theta: float = THETA, states: Optional[np.ndarray] = None,
                        drivers: Optional[Iterable[DriverState]] = None) -> float:
    """Largest h (1 - theta) |L_jj| + h max(-a_ii, 0); at most 1 keeps the explicit half order preserving.

    a_ii = d f_i / d y_i is sampled at the given (y, y_delayed) rows of shape
    (K, 2n) (default: the zero state) and driver states (default: the problem's).
    """
    h = problem.step
    n = problem.n
    x = problem.mesh.nodes
    states = np.zeros((1, 2 * n)) if states is None else np.asarray(states, dtype=float)
    drivers = [problem.driver] if drivers is None else list(drivers)
    nodes = np.repeat(x, states.shape[0])
    tiled = np.tile(states, (x.size, 1))
    idx = np.arange(n)
    decay = np.zeros(n)
    for omega in drivers:
        jac_y, _ = problem.reaction.jacobians(omega, nodes, np.ascontiguousarray(tiled[:, :n]),
                                              np.ascontiguousarray(tiled[:, n:]))
        decay = np.maximum(decay, np.max(-jac_y[:, idx, idx], axis=0))

    ratio = 0.0
    for i in range(n):
        L = diffusion_stencil(problem.mesh, problem.diffusion[i], problem.boundary.kinds[i],
                              problem.boundary.robin_alpha[i])
        ratio = max(ratio, h * (1.0 - theta) * float(np.max(np.abs(L.diagonal()))) + h * float(decay[i]))
    return ratio


@dataclass
class SolverState:
    """Ring buffer over the most recent delay window [t - 1, t]."""

    ring: np.ndarray
    head: int
    step_index: int
    initial_driver: DriverState
    step: float

    @classmethod
    def from_segment(cls, segment: Segment, driver: DriverState, step: float) -> "SolverState":
        return cls(np.array(segment.history), segment.delay_steps, 0, driver, step)

    @property
    def window(self) -> int:
        return self.ring.shape[0]

    @property
    def newest(self) -> np.ndarray:
        return self.ring[self.head]

    @property
    def oldest(self) -> np.ndarray:
        return self.ring[(self.head + 1) % self.window]

    @property
    def time(self) -> float:
        return self.step_index * self.step

    @property
    def driver(self) -> DriverState:
        return self.initial_driver.advance(self.time)

    def push(self, profile: np.ndarray) -> None:
        slot = (self.head + 1) % self.window
        self.ring[slot] = profile
        self.head = slot
        self.step_index += 1

    def scale(self, factor: float) -> None:
        self.ring *= factor

    def segment(self) -> Segment:
        return Segment(np.roll(self.ring, -(self.head + 1), axis=0))


def step(problem: ProblemSpec, operator: DiscreteDiffusionOperator, state: SolverState,
         bound: float = 1e8) -> SolverState:
    """Advance every species and the driver by h, pushing the new profile."""
    forcing = problem.reaction.evaluate(state.driver, problem.mesh.nodes, state.newest, state.oldest)
    new = operator.imex_stage(range(problem.n), state.newest, forcing)
    peak = float(np.max(np.abs(new)))
    if not np.isfinite(peak) or peak > bound:
        raise NumericalBlowupError(
            f"solution left the bound {bound:.3g} after t={state.time:.6g}", last_time=state.time
        )
    state.push(new)
    return state


@dataclass
class Trajectory:
    """Snapshots of z_t(w, phi), the live window and optionally every grid profile."""

    problem: ProblemSpec
    initial_driver: DriverState
    species: tuple[int, ...]
    snapshots: dict[int, Segment]
    state: SolverState
    dense: Optional[np.ndarray] = None
    origin: float = 0.0
    blowup_time: Optional[float] = field(default=None)

    @property
    def step(self) -> float:
        return self.problem.step

    @property
    def final_time(self) -> float:
        return self.state.time

    @property
    def steps(self) -> int:
        return self.state.step_index

    @property
    def times(self) -> list[float]:
        return [k * self.step for k in sorted(self.snapshots)]

    def driver_at(self, t: float) -> DriverState:
        return self.initial_driver.advance(t)

    def segment_at(self, t: float) -> Segment:
        k = grid_index(t, self.step)
        if k in self.snapshots:
            return self.snapshots[k]
        M = self.problem.delay_steps
        if self.dense is not None and 0 <= k <= self.steps:
            return Segment(self.dense[k:k + M + 1])
        if k == self.state.step_index:
            return self.state.segment()
        raise TimeNotAvailableError(f"no segment stored for t={t}")

    def profile_at(self, t: float) -> np.ndarray:
        k = grid_index(t, self.step)
        M = self.problem.delay_steps
        if self.dense is not None and -M <= k <= self.steps:
            return self.dense[k + M]
        lag = self.state.step_index - k
        if 0 <= lag <= M:
            return self.state.ring[(self.state.head - lag) % self.state.window]
        for j, seg in self.snapshots.items():
            if 0 <= j - k <= M:
                return seg.history[M - (j - k)]
        raise TimeNotAvailableError(f"no profile stored for t={t}")


class Integrator:
    """Integrates the nonlinear system for one problem, reusing its factorizations."""

    def __init__(self, problem: ProblemSpec, theta: float = THETA, bound: Optional[float] = None,
                 operator: Optional[DiscreteDiffusionOperator] = None):
        self.problem = problem
        self.operator = operator or build_operator(problem, theta)
        self.bound = bound if bound is not None else load_settings().blowup_bound

    def __call__(self, omega: DriverState, phi: Segment, T: float, snapshot_times: Iterable[float] = (),
                 keep_history: bool = False, progress: bool = False) -> Trajectory:
        problem = self.problem
        h = problem.step
        M = problem.delay_steps
        steps = grid_index(T, h)
        if steps < 0:
            raise ValueError(f"integration horizon must be nonnegative, got {T}")
        wanted = {grid_index(s, h) for s in snapshot_times}
        if any(k < 0 or k > steps for k in wanted):
            raise TimeNotAvailableError(f"snapshot times must lie in [0, {T}]")
        problem.validate_segment(phi)

        state = SolverState.from_segment(phi, omega, h)
        dense = None
        if keep_history:
            dense = np.empty((M + 1 + steps,) + phi.history.shape[1:])
            dense[:M + 1] = phi.history
        trajectory = Trajectory(problem, omega, tuple(range(problem.n)), {0: phi}, state, dense)

        logging.debug(f"[Solver] Integrating {steps} steps (T={T}, h={h:.4g})")
        try:
            for _ in tqdm(range(steps), desc="integrate", disable=not progress, leave=False):
                step(problem, self.operator, state, self.bound)
                if dense is not None:
                    dense[M + state.step_index] = state.newest
                if state.step_index in wanted:
                    trajectory.snapshots[state.step_index] = state.segment()
        except NumericalBlowupError as err:
            logging.warning(f"[Solver] Blowup: {err}")
            trajectory.blowup_time = err.last_time
            err.trajectory = trajectory
            raise
        return trajectory


def integrate(problem: ProblemSpec, omega: DriverState, phi: Segment, T: float,
              snapshot_times: Iterable[float] = (), *, keep_history: bool = False,
              operator: Optional[DiscreteDiffusionOperator] = None, theta: float = THETA,
              bound: Optional[float] = None, progress: bool = False) -> Trajectory:
    integrator = Integrator(problem, theta=theta, bound=bound, operator=operator)
    return integrator(omega, phi, T, snapshot_times, keep_history=keep_history, progress=progress)


def zero_trajectory(problem: ProblemSpec, omega: DriverState, T: float) -> Trajectory:
    """The solution z = 0 (valid when f(w, x, 0, 0) = 0) with a dense history, without stepping."""
    h = problem.step
    M = problem.delay_steps
    steps = grid_index(T, h)
    phi = problem.zero_segment()
    state = SolverState(np.zeros(phi.history.shape), M, steps, omega, h)
    dense = np.zeros((M + 1 + steps,) + phi.history.shape[1:])
    return Trajectory(problem, omega, tuple(range(problem.n)), {0: phi}, state, dense)


def segment_at(trajectory: Trajectory, t: float) -> Segment:
    return trajectory.segment_at(t)


def solve_diffusion_only(problem: ProblemSpec, species: int, z0: np.ndarray, t: float,
                         operator: Optional[DiscreteDiffusionOperator] = None,
                         decay: float = 0.0) -> np.ndarray:
    """e^{tA_i} z0 with the solver's diffusion stage (times the discrete e^{-decay t})."""
    operator = operator or build_operator(problem)
    z = np.array(z0, dtype=float)
    if z.shape != (problem.mesh.points,):
        raise ShapeMismatchError(f"profile must have {problem.mesh.points} nodes, got {z.shape}")
    zero = np.zeros_like(z)
    for _ in range(grid_index(t, problem.step)):
        z = operator.stage(species, z, zero, decay)
    return z
