"""
Numerical property checks: quasimonotonicity, order preservation, the
comparison inequality, linearization consistency and the irreducible-block
dichotomy. A failed property is a result row, never an exception.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .config import load_settings
from .model import DriverState, Order, ProblemSpec, ReactionCatalog, Segment
from .solver import Integrator, Trajectory, grid_index, monotone_step_ratio, zero_trajectory
from .variational import directional_derivative_check, integrate_variational, linearize_along

JACOBIAN_TOLERANCE = 1e-12
ORDER_TOLERANCE = 1e-8
COMPARISON_TOLERANCE = 1e-6
LINEAR_RESIDUAL_TOLERANCE = 1e-10
TAYLOR_RATIO = (1.8, 2.2)
DICHOTOMY_ZERO = 1e-12
MAX_CORNER_SPECIES = 6

SUITES = ("quasimonotone", "monotone", "comparison", "linearization", "dichotomy")


class CheckResult(BaseModel):
    check: str
    case_id: str
    passed: bool
    worst_margin: float
    tolerance: float
    witness: Optional[str] = None


class ComparisonReport(BaseModel):
    pair_id: str
    horizon: float
    times_checked: int
    worst_margin: float = Field(description="min of z(psi) - z(phi) - e^{-Lt} e^{tA}(psi(0) - phi(0))")
    lipschitz: float = Field(ge=0)
    box_lower: list[float]
    box_upper: list[float]
    tolerance: float
    passed: bool

    def as_result(self) -> CheckResult:
        return CheckResult(check="comparison", case_id=self.pair_id, passed=self.passed,
                           worst_margin=self.worst_margin, tolerance=self.tolerance)


@dataclass(frozen=True, eq=False)
class StateBox:
    """Per-species bounds used for both y and the delayed value."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def uniform(cls, n: int, low: float, high: float) -> "StateBox":
        return cls(np.full(n, float(low)), np.full(n, float(high)))

    def inflate(self, fraction: float = 0.1) -> "StateBox":
        pad = fraction * (self.upper - self.lower)
        return StateBox(self.lower - pad, self.upper + pad)

    def corners(self) -> np.ndarray:
        """Every corner of the box in (y, y_delayed) space, shape (4^n, 2n)."""
        n = self.lower.size
        if n > MAX_CORNER_SPECIES:
            return np.empty((0, 2 * n))
        bounds = [(lo, hi) for lo, hi in zip(self.lower, self.upper)] * 2
        return np.array(list(itertools.product(*bounds)))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        lower = np.concatenate([self.lower, self.lower])
        upper = np.concatenate([self.upper, self.upper])
        return rng.uniform(lower, upper, size=(count, lower.size))


def observed_box(*trajectories: Trajectory, fraction: float = 0.1) -> StateBox:
    """Range of every stored profile, inflated by 10%."""
    values = [tr.dense for tr in trajectories if tr.dense is not None]
    if not values:
        raise ValueError("observed_box needs trajectories integrated with keep_history=True")
    lower = np.min([np.min(v, axis=(0, 1)) for v in values], axis=0)
    upper = np.max([np.max(v, axis=(0, 1)) for v in values], axis=0)
    return StateBox(lower, upper).inflate(fraction)


def _fan_out(func: Callable, items: Sequence, threads: Optional[int] = None) -> list:
    """Run func over items in parallel; results keep the input order."""
    results = [None] * len(items)
    with ThreadPoolExecutor(max_workers=threads or load_settings().threads) as executor:
        future_to_idx = {executor.submit(func, item): idx for idx, item in enumerate(items)}
        for future in as_completed(future_to_idx):
            idx = future_to_idx[future]
            try:
                results[idx] = future.result()
            except Exception:
                logging.exception(f"[Harness] Case {idx} failed")
                raise
    return results


def _random_drivers(problem: ProblemSpec, rng: np.random.Generator, count: int) -> list[DriverState]:
    template = problem.driver
    return [template.with_angles(rng.uniform(0.0, 2.0 * np.pi, template.dim)) for _ in range(count)]


def _jacobians_at(problem: ProblemSpec, omega: DriverState, x: np.ndarray, points: np.ndarray):
    n = problem.n
    return problem.reaction.jacobians(omega, x, np.ascontiguousarray(points[:, :n]),
                                      np.ascontiguousarray(points[:, n:]))


def check_quasimonotone(problem: ProblemSpec, samples: int = 10_000, *, box: Optional[StateBox] = None,
                        seed: int = 0, batch: int = 100) -> CheckResult:
    """Off-diagonal D_y f and all of D_yd f must be >= -1e-12 at random (w, x, y, y_delayed)."""
    if samples < 1:
        raise ValueError("check_quasimonotone needs at least one sample")
    rng = np.random.default_rng(seed)
    box = box or StateBox.uniform(problem.n, 0.0, 2.0)
    x = problem.mesh.nodes
    off = ~np.eye(problem.n, dtype=bool)
    worst, witness = np.inf, None
    for start in range(0, samples, batch):
        count = min(batch, samples - start)
        omega = _random_drivers(problem, rng, 1)[0]
        nodes = rng.choice(x, size=count)
        points = box.sample(rng, count)
        jac_y, jac_d = _jacobians_at(problem, omega, nodes, points)
        off_values = np.where(off, jac_y, np.inf)
        per_point = np.minimum(np.min(off_values, axis=(1, 2)), np.min(jac_d, axis=(1, 2)))
        k = int(np.argmin(per_point))
        if per_point[k] < worst:
            worst = float(per_point[k])
            witness = (f"w={omega.coordinates.round(6).tolist()}, x={nodes[k]:.6g}, "
                       f"y={points[k, :problem.n].round(6).tolist()}, "
                       f"y_delayed={points[k, problem.n:].round(6).tolist()}")
    passed = worst >= -JACOBIAN_TOLERANCE
    if not passed:
        logging.warning(f"[Harness] Quasimonotone violation {worst:.3g} at {witness}")
    return CheckResult(check="quasimonotone", case_id="sampled", passed=passed, worst_margin=worst,
                       tolerance=JACOBIAN_TOLERANCE, witness=None if passed else witness)


def lipschitz_bound(problem: ProblemSpec, box: StateBox, *, samples: int = 256, drivers: int = 8,
                    seed: int = 0) -> float:
    """max over box corners and random points of the row 1-norms of [D_y f | D_yd f]."""
    rng = np.random.default_rng(seed)
    points = np.vstack([box.corners(), box.sample(rng, samples)])
    x = problem.mesh.nodes
    nodes = np.repeat(x, points.shape[0])
    tiled = np.tile(points, (x.size, 1))
    bound = 0.0
    for omega in [problem.driver] + _random_drivers(problem, rng, drivers):
        jac_y, jac_d = _jacobians_at(problem, omega, nodes, tiled)
        rows = np.sum(np.abs(jac_y), axis=2) + np.sum(np.abs(jac_d), axis=2)
        bound = max(bound, float(np.max(rows)))
    return bound


def _decayed_stage(operator, species: int, profile: np.ndarray, zero: np.ndarray, L: float,
                   h: float) -> np.ndarray:
    """One diffusion stage of the decaying bound; the per-step factor stays positive.

    (1 - hL) matches the scheme's explicit reaction when hL < 1; past that it
    would flip sign, so exp(-hL) is used instead.
    """
    if h * L < 1.0:
        return operator.stage(species, profile, zero, decay=L)
    return np.exp(-h * L) * operator.stage(species, profile, zero)


def check_comparison(problem: ProblemSpec, omega: DriverState, phi: Segment, psi: Segment, T: float, *,
                     pair_id: str = "0", integrator: Optional[Integrator] = None) -> ComparisonReport:
    """z_i(t, psi) - z_i(t, phi) >= e^{-Lt} e^{tA_i}(psi_i(0) - phi_i(0)) on every grid time in [0, T].

    The right-hand side is propagated with the solver's own diffusion stage
    carrying the linear decay -L, so the two sides share one discretization.
    """
    if phi.compare(psi) not in (Order.LEQ, Order.EQUAL):
        raise ValueError(f"pair {pair_id}: phi <= psi is required")
    if not problem.reaction.quasimonotone:
        logging.warning(f"[Harness] Comparison check on a non-quasimonotone reaction (pair {pair_id})")
    integrator = integrator or Integrator(problem)
    operator = integrator.operator
    lower = integrator(omega, phi, T, keep_history=True)
    upper = integrator(omega, psi, T, keep_history=True)
    box = observed_box(lower, upper)
    L = lipschitz_bound(problem, box)

    M = problem.delay_steps
    h = problem.step
    steps = grid_index(T, h)
    gap = upper.dense[M:] - lower.dense[M:]
    bound = np.array(psi.newest - phi.newest)
    zero = np.zeros(problem.mesh.points)
    worst = float(np.min(gap[0] - bound))
    for k in range(1, steps + 1):
        bound = np.stack([_decayed_stage(operator, i, bound[:, i], zero, L, h) for i in range(problem.n)],
                         axis=-1)
        worst = min(worst, float(np.min(gap[k] - bound)))

    tolerance = COMPARISON_TOLERANCE * (1.0 + max(phi.norm(), psi.norm()))
    report = ComparisonReport(
        pair_id=pair_id, horizon=T, times_checked=steps + 1, worst_margin=worst, lipschitz=L,
        box_lower=box.lower.tolist(), box_upper=box.upper.tolist(), tolerance=tolerance,
        passed=worst >= -tolerance,
    )
    logging.debug(f"[Harness] Comparison pair {pair_id}: margin={worst:.3g}, L={L:.4g}")
    return report


def random_ordered_pairs(problem: ProblemSpec, count: int, *, seed: int = 0,
                         scale: float = 1.0) -> list[tuple[Segment, Segment]]:
    """Pairs 0 <= phi <= psi with random histories; Dirichlet boundary nodes stay zero."""
    rng = np.random.default_rng(seed)
    mask = np.ones(problem.segment_shape)
    for i in problem.dirichlet_species:
        mask[:, [0, -1], i] = 0.0
    pairs = []
    for _ in range(count):
        phi = rng.uniform(0.0, scale, problem.segment_shape) * mask
        bump = rng.uniform(0.0, scale, problem.segment_shape) * mask
        pairs.append((Segment(phi), Segment(phi + bump)))
    return pairs


def check_monotonicity(problem: ProblemSpec, pairs: Sequence[tuple[Segment, Segment]], T: float, *,
                       omega: Optional[DriverState] = None, threads: Optional[int] = None) -> list[CheckResult]:
    """Order of every pair must survive at every grid time up to T, within 1e-8."""
    omega = omega or problem.driver
    integrator = Integrator(problem)

    def run(case):
        idx, (phi, psi) = case
        lower = integrator(omega, phi, T, keep_history=True)
        upper = integrator(omega, psi, T, keep_history=True)
        margin = float(np.min(upper.dense - lower.dense))
        return CheckResult(check="monotone", case_id=str(idx), passed=margin >= -ORDER_TOLERANCE,
                           worst_margin=margin, tolerance=ORDER_TOLERANCE)

    results = _fan_out(run, list(enumerate(pairs)), threads)
    failed = sum(not r.passed for r in results)
    logging.info(f"[Harness] Monotonicity: {len(results) - failed}/{len(results)} pairs preserved order")
    return results


def check_linearization(problem: ProblemSpec, cases: int, *, t: float = 1.0, eps: float = 1e-4,
                        seed: int = 0, threads: Optional[int] = None) -> list[CheckResult]:
    """Finite differences of the scheme against the variational solution.

    Linear reactions must agree to 1e-10; otherwise the residual must halve
    with eps (ratio in [1.8, 2.2]).
    """
    rng = np.random.default_rng(seed)
    pairs = random_ordered_pairs(problem, cases, seed=int(rng.integers(2**31)))
    omegas = _random_drivers(problem, rng, cases)
    linear = problem.reaction.catalog_id is ReactionCatalog.LINEAR
    integrator = Integrator(problem)

    def run(case):
        idx, ((phi, psi), omega) = case
        direction = psi - phi
        first = directional_derivative_check(problem, omega, phi, direction, t, eps, integrator.operator)
        if linear:
            return CheckResult(check="linearization", case_id=str(idx),
                               passed=first <= LINEAR_RESIDUAL_TOLERANCE, worst_margin=first,
                               tolerance=LINEAR_RESIDUAL_TOLERANCE)
        second = directional_derivative_check(problem, omega, phi, direction, t, eps / 2, integrator.operator)
        ratio = first / second if second > 0 else np.inf
        return CheckResult(check="linearization", case_id=str(idx),
                           passed=TAYLOR_RATIO[0] <= ratio <= TAYLOR_RATIO[1], worst_margin=ratio,
                           tolerance=TAYLOR_RATIO[1] - 2.0)

    return _fan_out(run, list(enumerate(zip(pairs, omegas))), threads)


def check_dichotomy(problem: ProblemSpec, *, t_star: float = 2.0, omega: Optional[DriverState] = None,
                    base: Optional[Segment] = None) -> list[CheckResult]:
    """For psi > 0 in one species, v at t_star is either identically 0 or >> 0 at interior nodes."""
    omega = omega or problem.driver
    if base is None and problem.zero_is_solution([omega]):
        trajectory = zero_trajectory(problem, omega, t_star)
    else:
        base = base if base is not None else problem.constant_segment(np.ones(problem.n))
        trajectory = Integrator(problem)(omega, base, t_star, keep_history=True)
    path = linearize_along(problem, trajectory)

    results = []
    for s in range(problem.n):
        profile = np.zeros((problem.mesh.points, problem.n))
        profile[:, s] = problem.positive_profile([s])[:, 0]
        psi = Segment.constant_in_time(profile, problem.delay_steps)
        v = integrate_variational(problem, path, psi, t_star, snapshot_times=[t_star])
        newest = v.segment_at(t_star).newest
        interior_min = float(np.min(newest[1:-1]))
        vanished = float(np.max(np.abs(newest))) <= DICHOTOMY_ZERO
        results.append(CheckResult(
            check="dichotomy", case_id=f"species-{s + 1}", passed=vanished or interior_min > 0.0,
            worst_margin=interior_min, tolerance=DICHOTOMY_ZERO,
        ))
    return results


def run_suite(problem: ProblemSpec, suite: str, *, seed: int = 0, threads: Optional[int] = None,
              count: Optional[int] = None) -> list[CheckResult]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite '{suite}', expected one of {SUITES}")
    if suite in ("monotone", "comparison"):
        rng = np.random.default_rng(seed)
        box = StateBox.uniform(problem.n, 0.0, 2.0)
        states = np.vstack([box.corners(), box.sample(rng, 64)])
        ratio = monotone_step_ratio(problem, states=states,
                                    drivers=[problem.driver] + _random_drivers(problem, rng, 4))
        if ratio > 1.0:
            logging.warning(f"[Harness] Explicit step ratio h(1-theta)|L_jj| + h max(-a_ii) = {ratio:.3g} > 1: "
                            f"the discrete scheme need not preserve order at this resolution")
    logging.info(f"[Harness] Running suite '{suite}' (seed={seed})")
    if suite == "quasimonotone":
        return [check_quasimonotone(problem, count or 10_000, seed=seed)]
    if suite == "monotone":
        return check_monotonicity(problem, random_ordered_pairs(problem, count or 100, seed=seed), 5.0,
                                  threads=threads)
    if suite == "comparison":
        pairs = random_ordered_pairs(problem, count or 25, seed=seed)
        integrator = Integrator(problem)

        def run(case):
            idx, (phi, psi) = case
            return check_comparison(problem, problem.driver, phi, psi, 3.0, pair_id=str(idx),
                                    integrator=integrator).as_result()

        return _fan_out(run, list(enumerate(pairs)), threads)
    if suite == "linearization":
        return check_linearization(problem, count or 20, seed=seed, threads=threads)
    return check_dichotomy(problem)
