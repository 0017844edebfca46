"""
Run manifests, CSV exports, the analysis report and binary restart dumps.
"""
import hashlib
import json
import logging
import struct
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from . import __version__
from .errors import ConfigError, ShapeMismatchError
from .harness import CheckResult
from .model import DriverState, ProblemSpec, Segment
from .solver import SolverState, Trajectory
from .spectrum import SpectrumEstimate
from .structure import AnalysisResult, PersistenceReport

DUMP_MAGIC = b"PFDE"
DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sHIIIIq")


class RunManifest(BaseModel):
    command: str
    config_path: str
    config_sha256: str
    seed: int = 0
    overrides: dict[str, Any] = Field(default_factory=dict)
    output_dir: str
    tool_version: str = __version__

    @classmethod
    def for_run(cls, command: str, config_path, raw_config: bytes, output_dir, seed: int = 0,
                **overrides) -> "RunManifest":
        return cls(
            command=command, config_path=str(config_path),
            config_sha256=hashlib.sha256(raw_config).hexdigest(), seed=seed,
            overrides={k: v for k, v in overrides.items() if v is not None},
            output_dir=str(output_dir),
        )

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.model_dump(), sort_keys=True).encode()).hexdigest()

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


# **************************************** CSV *************************************************

def write_csv(path, frame: pd.DataFrame, manifest_hash: str) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# manifest={manifest_hash}\n")
        frame.to_csv(fh, index=False, lineterminator="\n", float_format="%.17g")
    logging.info(f"[Reports] Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path) -> tuple[str, pd.DataFrame]:
    """Manifest hash and table of a file produced by write_csv."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first.startswith("# manifest="):
        raise ValueError(f"{path} has no manifest line")
    return first.split("=", 1)[1], pd.read_csv(path, skiprows=1)


def trajectory_frame(trajectory: Trajectory, times: Optional[Iterable[float]] = None,
                     time_offset: float = 0.0) -> pd.DataFrame:
    """Columns (t, species, node_index, x, value); species are 1-based."""
    times = trajectory.times if times is None else list(times)
    x = trajectory.problem.mesh.nodes
    rows = []
    for t in times:
        profile = trajectory.profile_at(t)
        for i in range(profile.shape[1]):
            rows.append(pd.DataFrame({
                "t": t + time_offset,
                "species": trajectory.species[i] + 1,
                "node_index": np.arange(x.size),
                "x": x,
                "value": profile[:, i],
            }))
    if not rows:
        return pd.DataFrame(columns=["t", "species", "node_index", "x", "value"])
    return pd.concat(rows, ignore_index=True)


def spectrum_frame(estimates: Sequence[SpectrumEstimate]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "block": est.block + 1,
            "sample_id": s.sample_id,
            "lambda": s.exponent,
            "residual": s.residual,
            "window_min_slope": s.window_min_slope,
            "window_max_slope": s.window_max_slope,
        }
        for est in estimates for s in est.samples
    ], columns=["block", "sample_id", "lambda", "residual", "window_min_slope", "window_max_slope"])


def check_frame(results: Sequence[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame([
        {"check": r.check, "case_id": r.case_id, "pass": r.passed,
         "worst_margin": r.worst_margin, "tolerance": r.tolerance}
        for r in results
    ], columns=["check", "case_id", "pass", "worst_margin", "tolerance"])


def matrix_frame(result: AnalysisResult) -> pd.DataFrame:
    matrix = result.matrix
    rows = []
    for i in range(matrix.n):
        for j in range(matrix.n):
            if i == j:
                continue
            rows.append({
                "row": i + 1,
                "col": j + 1,
                "value": matrix.values[i, j],
                "a_bar": matrix.a_bar[i, j] if matrix.a_bar is not None else np.nan,
                "b_bar": matrix.b_bar[i, j] if matrix.b_bar is not None else np.nan,
                "edge": bool(matrix.adjacency[i, j]),
                "window_boundary": bool(matrix.boundary_flags[i, j]) if matrix.boundary_flags is not None
                else False,
            })
    return pd.DataFrame(rows, columns=["row", "col", "value", "a_bar", "b_bar", "edge", "window_boundary"])


# **************************************** Analysis report *************************************

class MatrixSection(BaseModel):
    entries: list[list[float]]
    sample_count: int
    argmax_a: list[list[int]] = Field(default_factory=list)
    argmax_b: list[list[int]] = Field(default_factory=list)
    window_boundary_entries: list[list[int]] = Field(default_factory=list, description="1-based (row, col)")


class BlocksSection(BaseModel):
    k: int
    permutation: list[int]
    sizes: list[int]
    blocks: list[list[int]]
    I: list[int]
    J: list[int]


class SpectrumSection(BaseModel):
    block: int
    species: list[int]
    lower: float
    upper: float
    samples: int
    worst_residual: float


class VerdictSection(BaseModel):
    uniformly_persistent: bool
    strictly_persistent_at_zero: bool
    inconclusive_reason: Optional[str] = None
    tolerance: float


class AnalysisReport(BaseModel):
    """Labels are 1-based throughout."""

    manifest: str
    k_mode: str
    matrix: MatrixSection
    blocks: BlocksSection
    spectra: list[SpectrumSection]
    verdict: VerdictSection
    assumptions: list[str]
    empirical: Optional[PersistenceReport] = None


def build_analysis_report(result: AnalysisResult, manifest_hash: str,
                          empirical: Optional[PersistenceReport] = None) -> AnalysisReport:
    matrix, structure, verdict = result.matrix, result.structure, result.verdict

    def one_based(items):
        return [int(i) + 1 for i in items]

    flags = matrix.boundary_flags if matrix.boundary_flags is not None else np.zeros((matrix.n, matrix.n), bool)
    return AnalysisReport(
        manifest=manifest_hash,
        k_mode=result.sampler.mode.value,
        matrix=MatrixSection(
            entries=matrix.values.tolist(),
            sample_count=matrix.sample_count,
            argmax_a=matrix.argmax_a.tolist() if matrix.argmax_a is not None else [],
            argmax_b=matrix.argmax_b.tolist() if matrix.argmax_b is not None else [],
            window_boundary_entries=[one_based(pair) for pair in zip(*np.nonzero(flags))],
        ),
        blocks=BlocksSection(
            k=structure.k,
            permutation=one_based(structure.permutation),
            sizes=list(structure.sizes),
            blocks=[one_based(b) for b in structure.blocks],
            I=one_based(structure.I),
            J=one_based(structure.J),
        ),
        spectra=[
            SpectrumSection(
                block=s.block + 1, species=one_based(s.species), lower=s.lower, upper=s.upper,
                samples=len(s.samples),
                worst_residual=max((x.residual for x in s.samples if np.isfinite(x.residual)), default=0.0),
            )
            for s in result.spectra
        ],
        verdict=VerdictSection(
            uniformly_persistent=verdict.uniformly_persistent,
            strictly_persistent_at_zero=verdict.strictly_persistent_at_zero,
            inconclusive_reason=verdict.inconclusive_reason,
            tolerance=verdict.tolerance,
        ),
        assumptions=verdict.assumptions,
        empirical=empirical,
    )


def write_analysis_report(path, report: AnalysisReport) -> Path:
    path = Path(path)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logging.info(f"[Reports] Wrote analysis report {path}")
    return path


# **************************************** Restart dumps ***************************************

def dump_state(path, problem: ProblemSpec, state: SolverState) -> Path:
    """Versioned little-endian dump of the live delay window and the current driver state."""
    segment = state.segment()
    driver = state.driver
    header = _DUMP_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, problem.delay_steps, problem.mesh.points,
                               problem.n, driver.dim, state.step_index)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(driver.coordinates.astype("<f8").tobytes())
        fh.write(driver.frequencies.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(segment.history, dtype="<f8").tobytes())
    logging.info(f"[Reports] Dumped state at step {state.step_index} to {path}")
    return path


def load_state(path, problem: ProblemSpec) -> tuple[DriverState, Segment, int]:
    """(driver, segment, step index) from a dump written by dump_state for the same problem."""
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size:
        raise ConfigError(f"{path}: truncated state dump")
    magic, version, M, points, n, k, step_index = _DUMP_HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise ConfigError(f"{path}: not a state dump")
    if version != DUMP_VERSION:
        raise ConfigError(f"{path}: unsupported dump version {version}")
    if (M, points, n, k) != (problem.delay_steps, problem.mesh.points, problem.n, problem.driver.dim):
        raise ShapeMismatchError(
            f"{path}: dump has M={M}, points={points}, n={n}, driver dim={k}; the problem does not match"
        )
    body = np.frombuffer(raw, dtype="<f8", offset=_DUMP_HEADER.size)
    expected = 2 * k + (M + 1) * points * n
    if body.size != expected:
        raise ConfigError(f"{path}: expected {expected} values, found {body.size}")
    driver = DriverState(body[:k], body[k:2 * k])
    segment = Segment(body[2 * k:].reshape(M + 1, points, n))
    return driver, segment, int(step_index)
