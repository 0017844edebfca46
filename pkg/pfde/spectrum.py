"""
Lyapunov exponents of the linearized semiflow and principal spectra over a sampled minimal set.
"""
import functools
import hashlib
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .config import load_settings
from .errors import NoConvergenceError, ZeroSectionError
from .model import TWO_PI, DriverState, ProblemSpec, Segment
from .solver import DiscreteDiffusionOperator, Integrator, build_operator, grid_index, zero_trajectory
from .variational import CoefficientPath, VariationalPropagator, linearize_along

RENORMALIZE_BELOW = 1e-6
RENORMALIZE_ABOVE = 1e6
COLLAPSE_BELOW = 1e-300


class ExponentDiagnostics(BaseModel):
    window: float
    horizon: float
    residual: float = Field(description="RMS residual of the log-norm fit over the final window")
    window_min_slope: float
    window_max_slope: float
    renormalizations: int = 0
    degenerate: bool = False


class SampleExponent(BaseModel):
    sample_id: int
    label: str
    exponent: float
    residual: float
    window_min_slope: float
    window_max_slope: float
    renormalizations: int = 0
    degenerate: bool = False


class SpectrumEstimate(BaseModel):
    """Estimate of the principal spectrum [alpha_K, lambda_K] of one diagonal block."""

    block: int
    species: list[int]
    lower: float
    upper: float
    samples: list[SampleExponent]
    assumptions: list[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _ordered(self):
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        return self


class SpectrumParams(BaseModel):
    horizon: float = Field(default=20.0, gt=0, description="Integration time T per sample")
    window: float = Field(default=2.0, gt=0, description="Final regression window")
    norm: Literal["segment", "profile"] = "segment"
    samples_per_dim: int = Field(default=16, ge=1)
    transient: float = Field(default=50.0, ge=0)
    omega_samples: int = Field(default=8, ge=1)
    omega_spacing: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _long_enough(self):
        if self.horizon < 10 * self.window:
            raise ValueError(f"horizon {self.horizon} must be at least 10 windows ({10 * self.window})")
        return self


def _fit(times: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    slope, intercept = np.polyfit(times, values, 1)
    residual = float(np.sqrt(np.mean((values - (slope * times + intercept)) ** 2)))
    return float(slope), residual


def lyapunov_exponent(problem: ProblemSpec, path: CoefficientPath, psi0: Segment, T: float, window: float,
                      *, operator: Optional[DiscreteDiffusionOperator] = None,
                      norm: Literal["segment", "profile"] = "segment",
                      require_positive: bool = True) -> tuple[float, ExponentDiagnostics]:
    """Growth rate of ||v_t|| from psi0, renormalizing whenever the norm leaves [1e-6, 1e6].

    The exponent is the least-squares slope of the accumulated log-norm over the
    final window; the min/max slopes over consecutive windows of the second
    half of [0, T] are returned as convergence diagnostics.
    """
    h = problem.step
    steps = grid_index(T, h)
    per_window = grid_index(window, h)
    if per_window < 2 or steps < 10 * per_window:
        raise ValueError(f"need T >= 10 * window with a window of at least 2 steps (T={T}, window={window})")
    if require_positive and np.min(psi0.history[:, 1:-1, :]) <= 0.0:
        raise ValueError("psi0 must be strictly positive at interior nodes")

    propagator = VariationalPropagator(problem, path, psi0, operator)
    measure = propagator.segment_norm if norm == "segment" else propagator.profile_norm

    def degenerate(at: float):
        logging.warning(f"[Spectrum] Linearized solution collapsed at t={at:.4g}; exponent is -inf")
        return -np.inf, ExponentDiagnostics(window=window, horizon=T, residual=np.nan,
                                            window_min_slope=-np.inf, window_max_slope=-np.inf,
                                            degenerate=True)

    log_norms = np.empty(steps + 1)
    current = measure()
    if current < COLLAPSE_BELOW:
        return degenerate(0.0)
    log_scale = 0.0
    log_norms[0] = np.log(current)
    renormalizations = 0
    for k in range(1, steps + 1):
        propagator.step()
        current = measure()
        if current < COLLAPSE_BELOW:
            return degenerate(k * h)
        if current < RENORMALIZE_BELOW or current > RENORMALIZE_ABOVE:
            propagator.rescale(1.0 / current)
            log_scale += np.log(current)
            renormalizations += 1
            current = measure()
        log_norms[k] = log_scale + np.log(current)

    times = np.arange(steps + 1) * h
    exponent, residual = _fit(times[-per_window - 1:], log_norms[-per_window - 1:])
    slopes = []
    start = steps // 2
    while start + per_window <= steps:
        chunk = slice(start, start + per_window + 1)
        slopes.append(_fit(times[chunk], log_norms[chunk])[0])
        start += per_window
    diagnostics = ExponentDiagnostics(
        window=window, horizon=T, residual=residual,
        window_min_slope=min(slopes), window_max_slope=max(slopes),
        renormalizations=renormalizations,
    )
    return exponent, diagnostics


def characteristic_root(a: float, b: float, dmu: float, tol: float = 1e-10, max_iter: int = 200) -> float:
    """Real root of lambda = -dmu + a + b e^{-lambda} (b >= 0) by Newton's method."""
    if b < 0:
        raise ValueError(f"characteristic_root needs b >= 0, got {b}")
    lam = a - dmu  # g(lam) <= 0 here and g is concave increasing: monotone convergence
    for _ in range(max_iter):
        g = lam + dmu - a - b * np.exp(-lam)
        dg = 1.0 + b * np.exp(-lam)
        delta = g / dg
        lam -= delta
        if abs(delta) <= tol:
            return float(lam)
    raise NoConvergenceError(f"no convergence after {max_iter} iterations (a={a}, b={b}, dmu={dmu})")


# ---------------------------------------------------------------- sampling K

class SamplerMode(str, Enum):
    ZERO_SECTION = "zero-section"
    OMEGA_LIMIT = "omega-limit"


@dataclass(frozen=True, eq=False)
class KSample:
    sample_id: int
    driver: DriverState
    segment: Segment
    time: float = 0.0

    @property
    def label(self) -> str:
        angles = ",".join(f"{a:.4f}" for a in self.driver.coordinates)
        return f"t={self.time:g};w=({angles})"

    def fingerprint(self) -> str:
        digest = hashlib.md5(self.segment.history.tobytes())
        digest.update(self.driver.coordinates.tobytes())
        digest.update(self.driver.frequencies.tobytes())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class KSampler:
    """Finite sample of a minimal set K: the zero section Omega x {0} or one omega-limit orbit."""

    mode: SamplerMode
    drivers: tuple[DriverState, ...] = ()
    seed_driver: Optional[DriverState] = None
    seed_segment: Optional[Segment] = None
    transient: float = 50.0
    sample_times: tuple[float, ...] = ()

    @classmethod
    def zero_section(cls, problem: ProblemSpec, per_dim: int = 16) -> "KSampler":
        template = problem.driver
        axis = np.linspace(0.0, TWO_PI, per_dim, endpoint=False)
        drivers = tuple(
            template.with_angles(np.array(angles)) for angles in itertools.product(axis, repeat=template.dim)
        )
        return cls(SamplerMode.ZERO_SECTION, drivers=drivers)

    @classmethod
    def omega_limit(cls, problem: ProblemSpec, seed_segment: Segment, transient: float = 50.0,
                    count: int = 8, spacing: float = 1.0,
                    seed_driver: Optional[DriverState] = None) -> "KSampler":
        return cls(SamplerMode.OMEGA_LIMIT, seed_driver=seed_driver or problem.driver,
                   seed_segment=seed_segment, transient=transient,
                   sample_times=tuple(j * spacing for j in range(count)))

    @property
    def assumptions(self) -> list[str]:
        if self.mode is SamplerMode.ZERO_SECTION:
            return [
                "K = Omega x {0}; minimality of the driver hull is assumed (rationally independent frequencies)",
                f"sup/inf over K approximated from {len(self.drivers)} grid driver states",
            ]
        return [
            "the sampled omega-limit set is assumed minimal with a flow extension (not verified)",
            f"K approximated by {len(self.sample_times)} segments after a transient of {self.transient:g}",
        ]

    def samples(self, problem: ProblemSpec, integrator: Optional[Integrator] = None) -> list[KSample]:
        if self.mode is SamplerMode.ZERO_SECTION:
            if not problem.zero_is_solution(self.drivers):
                raise ZeroSectionError("zero-section sampling requires f(w, x, 0, 0) = 0")
            zero = problem.zero_segment()
            return [KSample(j, omega, zero) for j, omega in enumerate(self.drivers)]
        integrator = integrator or Integrator(problem)
        times = [self.transient + s for s in self.sample_times]
        trajectory = integrator(self.seed_driver, self.seed_segment, max(times), snapshot_times=times)
        logging.info(f"[Spectrum] Sampled {len(times)} omega-limit segments after t={self.transient:g}")
        return [
            KSample(j, trajectory.driver_at(t), trajectory.segment_at(t), t) for j, t in enumerate(times)
        ]


# ---------------------------------------------------------------- principal spectrum

def cache_result(func):
    """Cache per-sample exponents as JSON under the estimator's cache_dir (when set)."""

    @functools.wraps(func)
    def wrapper(self, sample: KSample, species: tuple[int, ...]) -> SampleExponent:
        if self.cache_dir is None:
            return func(self, sample, species)
        cache_key = hashlib.md5(
            f"{func.__name__}:{self.problem.fingerprint()}:{sample.fingerprint()}:{species}:"
            f"{self.params.model_dump_json()}:{self.zero_section}".encode()
        ).hexdigest()
        cache_file = self.cache_dir / f"exponent_{cache_key}.json"
        try:
            if cache_file.exists():
                return SampleExponent.model_validate_json(cache_file.read_text())
        except (OSError, ValueError):
            logging.warning(f"[Spectrum] Ignoring unreadable cache entry {cache_file.name}")

        result = func(self, sample, species)

        if np.isfinite(result.exponent):
            try:
                cache_file.write_text(result.model_dump_json())
            except OSError:
                logging.warning(f"[Spectrum] Could not write cache entry {cache_file.name}")
        return result

    return wrapper


class SpectrumEstimator:
    """Per-block principal spectrum: one Lyapunov exponent per sampled point of K."""

    def __init__(self, problem: ProblemSpec, params: Optional[SpectrumParams] = None,
                 operator: Optional[DiscreteDiffusionOperator] = None, threads: Optional[int] = None,
                 cache_dir: Optional[Path] = None):
        settings = load_settings()
        self.problem = problem
        self.params = params or SpectrumParams()
        self.operator = operator or build_operator(problem)
        self.integrator = Integrator(problem, operator=self.operator)
        self.threads = threads or settings.threads
        self.cache_dir = Path(cache_dir) if cache_dir else settings.cache_dir
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.zero_section = False

    @cache_result
    def sample_exponent(self, sample: KSample, species: tuple[int, ...]) -> SampleExponent:
        problem, params = self.problem, self.params
        if self.zero_section:
            trajectory = zero_trajectory(problem, sample.driver, params.horizon)
        else:
            trajectory = self.integrator(sample.driver, sample.segment, params.horizon, keep_history=True)
        path = linearize_along(problem, trajectory, species)
        psi0 = Segment.constant_in_time(problem.positive_profile(species), problem.delay_steps)
        exponent, diag = lyapunov_exponent(problem, path, psi0, params.horizon, params.window,
                                           operator=self.operator, norm=params.norm)
        logging.debug(f"[Spectrum] Sample {sample.sample_id} species {species}: lambda={exponent:.6g}")
        return SampleExponent(
            sample_id=sample.sample_id, label=sample.label, exponent=exponent,
            residual=diag.residual, window_min_slope=diag.window_min_slope,
            window_max_slope=diag.window_max_slope, renormalizations=diag.renormalizations,
            degenerate=diag.degenerate,
        )

    def exponents(self, samples: Sequence[KSample], species: tuple[int, ...]) -> list[SampleExponent]:
        """Run the samples in parallel; results keep the sample order."""
        results = [None] * len(samples)
        with ThreadPoolExecutor(max_workers=self.threads) as executor:
            future_to_idx = {
                executor.submit(self.sample_exponent, sample, species): idx for idx, sample in enumerate(samples)
            }
            for future in as_completed(future_to_idx):
                idx = future_to_idx[future]
                try:
                    results[idx] = future.result()
                except Exception:
                    logging.exception(f"[Spectrum] Sample {samples[idx].sample_id} failed")
                    raise
        return results

    def __call__(self, sampler: KSampler, species: Sequence[int], block: int = 0,
                 samples: Optional[Sequence[KSample]] = None) -> SpectrumEstimate:
        species = tuple(species)
        self.zero_section = sampler.mode is SamplerMode.ZERO_SECTION
        if samples is None:
            samples = sampler.samples(self.problem, self.integrator)
        logging.info(f"[Spectrum] Block {block} (species {species}): {len(samples)} samples")
        results = self.exponents(samples, species)
        values = [r.exponent for r in results]
        return SpectrumEstimate(
            block=block, species=list(species), lower=min(values), upper=max(values),
            samples=results, assumptions=sampler.assumptions,
        )


def principal_spectrum(problem: ProblemSpec, sampler: KSampler, block: Sequence[int],
                       params: Optional[SpectrumParams] = None, *, block_index: int = 0,
                       operator: Optional[DiscreteDiffusionOperator] = None,
                       threads: Optional[int] = None) -> SpectrumEstimate:
    estimator = SpectrumEstimator(problem, params, operator=operator, threads=threads)
    return estimator(sampler, block, block_index)
