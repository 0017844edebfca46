import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import CatalogError, ConfigError, ShapeMismatchError
from .model import BoundarySpec, DriverState, Mesh1D, ProblemSpec, ReactionTerm, Segment

# Load environment variables from .env file
load_dotenv()


class RuntimeSettings(BaseModel):
    """Process-wide knobs read from the environment (PFDE_*)."""

    threads: int = Field(default=1, ge=1, description="Worker cap for per-sample and per-case fan-out")
    blowup_bound: float = Field(default=1e8, gt=0, description="NUMERICAL_BLOWUP threshold on |z|")
    log_level: str = Field(default="INFO")
    cache_dir: Optional[Path] = Field(default=None, description="On-disk cache for per-sample exponents")


def load_settings() -> RuntimeSettings:
    try:
        return RuntimeSettings(
            threads=int(os.getenv("PFDE_THREADS") or os.cpu_count() or 1),
            blowup_bound=float(os.getenv("PFDE_BLOWUP_BOUND") or 1e8),
            log_level=os.getenv("PFDE_LOG_LEVEL") or "INFO",
            cache_dir=os.getenv("PFDE_CACHE_DIR") or None,
        )
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"invalid PFDE_* environment setting: {e}") from e


# **************************************** Problem configuration schema *************************

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemSection(_Section):
    n: int = Field(ge=1, description="Number of species")
    length: float = Field(gt=0, description="Spatial interval [0, length]")
    mesh_points: int = Field(ge=9, description="Number of mesh nodes N+1")
    delay_steps: int = Field(ge=4, description="M; the time step is 1/M")


class SpeciesSection(_Section):
    diffusion: float = Field(gt=0)
    bc: Literal["dirichlet", "neumann", "robin"]
    robin_alpha_left: float = Field(default=0.0, ge=0)
    robin_alpha_right: float = Field(default=0.0, ge=0)


class ReactionSection(_Section):
    catalog: str
    name: Optional[str] = None
    coefficients: dict[str, Any] = Field(default_factory=dict)


class DriverSection(_Section):
    frequencies: list[float] = Field(default_factory=list)
    phases: list[float] = Field(default_factory=list)


class InitialSection(_Section):
    shape: Literal["constant", "sine", "cosine"] = "constant"
    values: list[float] = Field(default_factory=list)


class PFDEConfig(_Section):
    problem: ProblemSection
    species: list[SpeciesSection]
    reaction: ReactionSection
    driver: DriverSection = Field(default_factory=DriverSection)
    initial: InitialSection = Field(default_factory=InitialSection)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(p) for p in item["loc"])
        parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> PFDEConfig:
    try:
        config = PFDEConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {_describe(e)}") from e
    n = config.problem.n
    if len(config.species) != n:
        raise ConfigError(f"species: expected {n} [[species]] sections, got {len(config.species)}")
    if config.initial.values and len(config.initial.values) != n:
        raise ConfigError(f"initial.values: expected {n} values, got {len(config.initial.values)}")
    if config.driver.phases and len(config.driver.phases) != len(config.driver.frequencies):
        raise ConfigError("driver.phases: one phase per frequency is required")
    return config


def read_config(path) -> tuple[PFDEConfig, bytes]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read configuration {path}: {e}") from e
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config(data), raw


def build_problem(config: PFDEConfig) -> ProblemSpec:
    section = config.problem
    try:
        reaction = ReactionTerm.from_coefficients(
            config.reaction.catalog, section.n, config.reaction.coefficients, config.reaction.name
        )
        frequencies = np.asarray(config.driver.frequencies, dtype=float)
        phases = np.asarray(config.driver.phases or [0.0] * frequencies.size, dtype=float)
        return ProblemSpec(
            n=section.n,
            diffusion=tuple(s.diffusion for s in config.species),
            mesh=Mesh1D(section.length, section.mesh_points - 1),
            boundary=BoundarySpec(
                tuple(s.bc for s in config.species),
                tuple((s.robin_alpha_left, s.robin_alpha_right) for s in config.species),
            ),
            reaction=reaction,
            driver=DriverState(phases, frequencies),
            delay_steps=section.delay_steps,
        )
    except (CatalogError, ShapeMismatchError) as e:
        raise ConfigError(f"invalid problem: {e}") from e


def build_initial_segment(config: PFDEConfig, problem: ProblemSpec) -> Segment:
    """Constant-in-time history from the [initial] section (zero when absent)."""
    values = np.asarray(config.initial.values or [0.0] * problem.n, dtype=float)
    x = problem.mesh.nodes
    ell = problem.mesh.length
    shape = {
        "constant": np.ones_like(x),
        "sine": np.sin(np.pi * x / ell),
        "cosine": np.cos(np.pi * x / ell),
    }[config.initial.shape]
    profile = shape[:, None] * values[None, :]
    if config.initial.shape == "sine":
        profile[[0, -1]] = 0.0
    return problem.validate_segment(Segment.constant_in_time(profile, problem.delay_steps))


def load_problem(path) -> ProblemSpec:
    config, _ = read_config(path)
    return build_problem(config)
