"""
Interaction matrix, block-triangular decomposition and persistence verdicts.

Species i depends on species j when the sup over K of a_ij + b_ij is positive
(edge i -> j). Strongly connected components of that graph become the
diagonal blocks, ordered so that every block only depends on earlier ones:
the permuted matrix is block lower triangular.
"""
import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field

from .errors import FailedWitnessError, MissingSpectrumError, ShapeMismatchError, ZeroSectionError
from .model import ProblemSpec
from .solver import Integrator
from .spectrum import KSample, KSampler, SamplerMode, SpectrumEstimate, SpectrumEstimator, SpectrumParams

EDGE_THRESHOLD = 1e-10
DEFAULT_TOLERANCE = 1e-2
NEAR_ZERO_REASON = "spectrum within tolerance of zero"
WITNESS_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Off-diagonal sup a_ij + sup b_ij over the sampled K and mesh nodes; zero diagonal."""

    values: np.ndarray
    a_bar: Optional[np.ndarray] = None
    b_bar: Optional[np.ndarray] = None
    sample_count: int = 0
    argmax_a: Optional[np.ndarray] = None
    argmax_b: Optional[np.ndarray] = None
    boundary_flags: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ShapeMismatchError(f"interaction matrix must be square, got {values.shape}")
        np.fill_diagonal(values, 0.0)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, values) -> "InteractionMatrix":
        return cls(np.asarray(values, dtype=float))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def threshold(self) -> float:
        return EDGE_THRESHOLD * (1.0 + float(np.max(self.values, initial=0.0)))

    @property
    def adjacency(self) -> np.ndarray:
        adjacency = self.values > self.threshold
        np.fill_diagonal(adjacency, False)
        return adjacency

    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from((int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency)))
        return graph

    def restrict(self, species: Sequence[int]) -> "InteractionMatrix":
        index = list(species)
        return InteractionMatrix(self.values[np.ix_(index, index)])


def _as_matrix(matrix: Union[InteractionMatrix, np.ndarray]) -> InteractionMatrix:
    return matrix if isinstance(matrix, InteractionMatrix) else InteractionMatrix.from_array(matrix)


def _boundary_maximum(per_sample: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    """Entries whose max over samples is attained only at the first or last sample."""
    count = per_sample.shape[0]
    if count < 3:
        return np.zeros(argmax.shape, dtype=bool)
    interior = np.max(per_sample[1:-1], axis=0)
    peak = np.max(per_sample, axis=0)
    return ((argmax == 0) | (argmax == count - 1)) & (peak > interior)


def interaction_matrix(problem: ProblemSpec, sampler: KSampler,
                       samples: Optional[Sequence[KSample]] = None,
                       integrator: Optional[Integrator] = None) -> InteractionMatrix:
    """sup of a_ij and sup of b_ij over sampled (w, phi) in K and nodes x, then summed."""
    if samples is None:
        samples = sampler.samples(problem, integrator)
    x = problem.mesh.nodes
    n = problem.n
    a_samples = np.empty((len(samples), n, n))
    b_samples = np.empty((len(samples), n, n))
    for k, sample in enumerate(samples):
        phi = sample.segment
        jac_y, jac_d = problem.reaction.jacobians(sample.driver, x, phi.newest, phi.oldest)
        a_samples[k] = np.max(jac_y, axis=0)
        b_samples[k] = np.max(jac_d, axis=0)

    a_bar, b_bar = np.max(a_samples, axis=0), np.max(b_samples, axis=0)
    argmax_a, argmax_b = np.argmax(a_samples, axis=0), np.argmax(b_samples, axis=0)
    flags = np.zeros((n, n), dtype=bool)
    if sampler.mode is SamplerMode.OMEGA_LIMIT:
        flags = _boundary_maximum(a_samples, argmax_a) | _boundary_maximum(b_samples, argmax_b)
        np.fill_diagonal(flags, False)
        if flags.any():
            logging.warning(f"[Structure] {int(flags.sum())} entries peak at the edge of the sample window")

    matrix = InteractionMatrix(a_bar + b_bar, a_bar, b_bar, len(samples), argmax_a, argmax_b, flags)
    if problem.reaction.quasimonotone and np.min(matrix.values) < -EDGE_THRESHOLD:
        logging.warning("[Structure] Negative interaction entry for a quasimonotone reaction")
    logging.info(f"[Structure] Interaction matrix from {len(samples)} samples: "
                 f"{int(matrix.adjacency.sum())} coupling edges")
    return matrix


def is_irreducible(matrix: Union[InteractionMatrix, np.ndarray]) -> bool:
    matrix = _as_matrix(matrix)
    if matrix.n == 1:
        return True
    return nx.is_strongly_connected(matrix.graph())


@dataclass(frozen=True)
class BlockStructure:
    """Blocks in dependency order; I and J are 0-based block indices."""

    permutation: tuple[int, ...]
    blocks: tuple[tuple[int, ...], ...]
    I: tuple[int, ...]
    J: tuple[int, ...]
    adjacency: np.ndarray

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @property
    def needed(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.I) | set(self.J)))

    def block_of(self, species: int) -> int:
        for j, block in enumerate(self.blocks):
            if species in block:
                return j
        raise KeyError(species)

    def permuted(self, values: np.ndarray) -> np.ndarray:
        perm = list(self.permutation)
        return np.asarray(values)[np.ix_(perm, perm)]

    def is_block_lower_triangular(self, values: np.ndarray) -> bool:
        permuted = self.permuted(values)
        start = 0
        for size in self.sizes:
            if np.any(permuted[start:start + size, start + size:] != 0):
                return False
            start += size
        return True


def block_triangularize(matrix: Union[InteractionMatrix, np.ndarray]) -> BlockStructure:
    matrix = _as_matrix(matrix)
    graph = matrix.graph()
    condensation = nx.condensation(graph)
    members = {c: tuple(sorted(condensation.nodes[c]["members"])) for c in condensation.nodes}
    # a block's dependencies (its out-edges) come before it
    order = list(nx.lexicographical_topological_sort(condensation.reverse(copy=True),
                                                     key=lambda c: members[c][0]))
    blocks = tuple(members[c] for c in order)
    permutation = tuple(i for block in blocks for i in block)
    I = tuple(j for j, c in enumerate(order) if condensation.out_degree(c) == 0)
    J = tuple(j for j, c in enumerate(order) if condensation.in_degree(c) == 0)
    structure = BlockStructure(permutation, blocks, I, J, matrix.adjacency)
    if not structure.is_block_lower_triangular(structure.adjacency):
        raise RuntimeError("condensation order did not produce a block lower triangular form")
    logging.info(f"[Structure] k={structure.k} blocks {[list(b) for b in blocks]}, I={list(I)}, J={list(J)}")
    return structure


# ---------------------------------------------------------------- verdicts

class Verdict(BaseModel):
    uniformly_persistent: bool
    strictly_persistent_at_zero: bool
    inconclusive_reason: Optional[str] = None
    tolerance: float
    I: list[int]
    J: list[int]
    spectra: list[SpectrumEstimate]
    assumptions: list[str] = Field(default_factory=list)


def classify_persistence(structure: BlockStructure,
                         spectra: Union[Sequence[SpectrumEstimate], Mapping[int, SpectrumEstimate]],
                         tol: float = DEFAULT_TOLERANCE) -> Verdict:
    """Uniform persistence through the blocks in I, strict persistence at 0 through J."""
    if isinstance(spectra, Mapping):
        by_block = dict(spectra)
    else:
        by_block = {s.block: s for s in spectra}
    missing = [j for j in structure.needed if j not in by_block]
    if missing:
        raise MissingSpectrumError(f"no spectrum for block(s) {[j + 1 for j in missing]}")

    def positive(blocks):
        return all(by_block[j].lower > tol for j in blocks)

    near_zero = [j for j in structure.needed if -tol <= by_block[j].lower <= tol]
    assumptions = []
    for j in structure.needed:
        for note in by_block[j].assumptions:
            if note not in assumptions:
                assumptions.append(note)
    verdict = Verdict(
        uniformly_persistent=positive(structure.I),
        strictly_persistent_at_zero=positive(structure.J),
        inconclusive_reason=NEAR_ZERO_REASON if near_zero else None,
        tolerance=tol,
        I=list(structure.I),
        J=list(structure.J),
        spectra=[by_block[j] for j in sorted(by_block)],
        assumptions=assumptions,
    )
    logging.info(f"[Structure] Verdict: uniform={verdict.uniformly_persistent}, "
                 f"strict={verdict.strictly_persistent_at_zero}, inconclusive={verdict.inconclusive_reason}")
    return verdict


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    matrix: InteractionMatrix
    structure: BlockStructure
    spectra: list[SpectrumEstimate]
    verdict: Verdict
    sampler: KSampler


def analyze_persistence(problem: ProblemSpec, sampler: KSampler, params: Optional[SpectrumParams] = None,
                        tol: float = DEFAULT_TOLERANCE, threads: Optional[int] = None) -> AnalysisResult:
    """interaction_matrix -> block_triangularize -> spectra of blocks in I and J -> verdict."""
    estimator = SpectrumEstimator(problem, params, threads=threads)
    samples = sampler.samples(problem, estimator.integrator)
    matrix = interaction_matrix(problem, sampler, samples)
    structure = block_triangularize(matrix)
    spectra = [estimator(sampler, structure.blocks[j], j, samples) for j in structure.needed]
    verdict = classify_persistence(structure, spectra, tol)
    return AnalysisResult(matrix, structure, spectra, verdict, sampler)


# ---------------------------------------------------------------- empirical witnesses

class PersistenceReport(BaseModel):
    trials: int
    horizon: float
    late_infimum: list[float] = Field(description="Per species, over uniform trials, interior nodes, late times")
    late_supremum: list[float]
    psi0: list[float] = Field(description="Measured uniform lower bound: half the late infimum")
    t0: Optional[float] = Field(default=None, description="Time after which every uniform trial stays above psi0")
    strict_late_infimum: list[list[float]] = Field(default_factory=list)
    strict_witness: bool = False


def _late_window(problem: ProblemSpec, dense: np.ndarray, start: int) -> np.ndarray:
    """Per-time, per-species minimum over interior nodes from grid index start on."""
    M = problem.delay_steps
    return np.min(dense[M + start:, 1:-1, :], axis=1)


def empirical_persistence(problem: ProblemSpec, structure: BlockStructure, verdict: Verdict, trials: int,
                          T: float, *, seed: int = 0, initial_range: tuple[float, float] = (0.01, 1.0),
                          integrator: Optional[Integrator] = None,
                          floor: float = WITNESS_FLOOR) -> PersistenceReport:
    """Simulate from phi >> 0 (uniform) and single-species phi > 0 (strict); measure late lower bounds.

    A claim is witnessed only if the late infimum stays above floor: the uniform
    claim for every species, the strict claim in every single-species trial.
    """
    if trials < 1:
        raise ValueError(f"need at least one trial, got {trials}")
    omega = problem.driver
    if not problem.zero_is_solution([omega]):
        raise ZeroSectionError("empirical persistence is measured above K = Omega x {0}")
    integrator = integrator or Integrator(problem)
    rng = np.random.default_rng(seed)
    steps = int(round(T / problem.step))
    late = steps // 2

    uniform_mins, late_sup = [], []
    for _ in range(trials):
        phi = problem.constant_segment(rng.uniform(*initial_range, size=problem.n))
        trajectory = integrator(omega, phi, T, keep_history=True)
        uniform_mins.append(_late_window(problem, trajectory.dense, 0))
        late_sup.append(np.max(np.abs(trajectory.dense[problem.delay_steps + late:]), axis=(0, 1)))
    late_infimum = np.min([m[late:] for m in uniform_mins], axis=(0, 1))
    psi0 = 0.5 * late_infimum
    t0 = None
    if np.all(psi0 > 0):
        above = np.all(np.min(uniform_mins, axis=0) >= psi0, axis=1)
        failing = np.nonzero(~above)[0]
        t0 = float((failing[-1] + 1 if failing.size else 0) * problem.step)

    strict_rows = []
    for trial in range(trials):
        species = trial % problem.n
        values = np.zeros(problem.n)
        values[species] = rng.uniform(*initial_range)
        trajectory = integrator(omega, problem.constant_segment(values), T, keep_history=True)
        strict_rows.append(np.min(_late_window(problem, trajectory.dense, late), axis=0).tolist())
    strict_witness = all(max(row) > floor for row in strict_rows)

    report = PersistenceReport(
        trials=trials, horizon=T,
        late_infimum=late_infimum.tolist(), late_supremum=np.max(late_sup, axis=0).tolist(),
        psi0=psi0.tolist(), t0=t0, strict_late_infimum=strict_rows, strict_witness=strict_witness,
    )
    logging.info(f"[Structure] Empirical late infimum {report.late_infimum}, t0={t0}")
    if verdict.uniformly_persistent and np.min(late_infimum) <= floor:
        raise FailedWitnessError(f"uniform persistence claimed but late infimum is {np.min(late_infimum):.3g}")
    if verdict.strictly_persistent_at_zero and not strict_witness:
        dying = [i for i, row in enumerate(strict_rows) if max(row) <= floor]
        raise FailedWitnessError(f"strict persistence claimed but single-species trials {dying} fell to {floor:g}")
    return report
