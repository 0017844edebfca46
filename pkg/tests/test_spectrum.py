import json

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import make_problem
from pfde.errors import NoConvergenceError, ZeroSectionError
from pfde.model import Segment
from pfde.solver import integrate
from pfde.spectrum import (
    KSampler,
    SamplerMode,
    SpectrumEstimator,
    SpectrumParams,
    characteristic_root,
    lyapunov_exponent,
    principal_spectrum,
)
from pfde.variational import CoefficientPath, linearize_along


def _exponent(problem, A, B=0.0, psi0=None, T=20.0, window=2.0, norm="segment"):
    path = CoefficientPath.constant(problem, A, B)
    if psi0 is None:
        psi0 = Segment.constant_in_time(problem.positive_profile(), problem.delay_steps)
    return lyapunov_exponent(problem, path, psi0, T, window, norm=norm)


# ---------------------------------------------------------------- characteristic roots

@pytest.mark.parametrize("a,b,dmu,expected", [
    (0.0, 0.0, 0.0, 0.0),
    (0.5, 0.0, 0.0, 0.5),
    (0.0, 1.0, 0.0, 0.5671432904097838),
    (-1.0, 1.0, 0.0, 0.0),
    (1.0, 0.0, 1.0, 0.0),
])
def test_characteristic_root_examples(a, b, dmu, expected):
    assert characteristic_root(a, b, dmu) == pytest.approx(expected, abs=1e-9)


def test_characteristic_root_errors():
    with pytest.raises(ValueError):
        characteristic_root(0.0, -1.0, 0.0)
    with pytest.raises(NoConvergenceError):
        characteristic_root(0.0, 1.0, 0.0, max_iter=1)


# ---------------------------------------------------------------- exponents

def test_neutral_flow_has_zero_exponent():
    exponent, diag = _exponent(make_problem("linear"), 0.0)
    assert exponent == pytest.approx(0.0, abs=1e-6)
    assert not diag.degenerate


def test_constant_growth_rate():
    exponent, diag = _exponent(make_problem("linear"), 0.5)
    assert exponent == pytest.approx(0.5, abs=1e-2)
    assert diag.window_min_slope <= exponent + 1e-9 <= diag.window_max_slope + 2e-9
    assert diag.residual < 1e-6


def test_pure_delay_matches_characteristic_root():
    exponent, _ = _exponent(make_problem("linear"), 0.0, 1.0)
    assert exponent == pytest.approx(characteristic_root(0.0, 1.0, 0.0), abs=2e-2)


def test_dirichlet_heat_decay_rate(heat_problem):
    exponent, diag = _exponent(heat_problem, 0.0)
    assert exponent == pytest.approx(-1.0, abs=5e-2)
    assert diag.renormalizations >= 1


def test_exponent_is_scale_invariant():
    problem = make_problem("linear")
    psi0 = Segment.constant_in_time(problem.positive_profile(), problem.delay_steps)
    base, _ = _exponent(problem, 0.5, psi0=psi0)
    scaled, _ = _exponent(problem, 0.5, psi0=psi0 * 1e3)
    assert scaled == pytest.approx(base, abs=1e-9)


def test_exponent_is_monotone_in_the_coefficients():
    problem = make_problem("linear")
    low, _ = _exponent(problem, 0.2, 0.1)
    high, _ = _exponent(problem, 0.4, 0.3)
    assert low <= high


def test_segment_and_profile_norms_agree():
    problem = make_problem("linear")
    segment, _ = _exponent(problem, 0.5, norm="segment")
    profile, _ = _exponent(problem, 0.5, norm="profile")
    assert segment == pytest.approx(profile, abs=1e-2)


@pytest.mark.parametrize("norm", ["segment", "profile"])
def test_collapsed_solution_is_degenerate(norm):
    # h * A = -1 annihilates a constant profile in one step
    problem = make_problem("linear", diffusion=1e-20)
    exponent, diag = _exponent(problem, -64.0, norm=norm)
    assert exponent == -np.inf
    assert diag.degenerate


def test_exponent_argument_checks():
    problem = make_problem("linear")
    with pytest.raises(ValueError):
        _exponent(problem, 0.5, psi0=problem.zero_segment())
    with pytest.raises(ValueError):
        _exponent(problem, 0.5, T=10.0, window=2.0)


def test_params_require_ten_windows():
    with pytest.raises(ValidationError):
        SpectrumParams(horizon=10.0, window=2.0)
    assert SpectrumParams(horizon=20.0, window=2.0).norm == "segment"


# ---------------------------------------------------------------- sampling K

def test_zero_section_grid_size():
    problem = make_problem("cooperative_lv", n=2, coefficients={"r": [1.0, 1.0], "s": [1.0, 1.0]},
                           frequencies=[1.0, np.sqrt(2.0)])
    sampler = KSampler.zero_section(problem, per_dim=3)
    samples = sampler.samples(problem)
    assert len(samples) == 9
    assert all(s.segment.norm() == 0.0 for s in samples)
    assert sampler.mode is SamplerMode.ZERO_SECTION


def test_zero_section_of_autonomous_problem_has_one_sample(logistic_problem):
    assert len(KSampler.zero_section(logistic_problem).samples(logistic_problem)) == 1


def test_zero_section_requires_zero_solution():
    problem = make_problem("linear", coefficients={"source": [1.0]})
    with pytest.raises(ZeroSectionError):
        KSampler.zero_section(problem).samples(problem)


def test_omega_limit_samples(forced_cooperative_problem):
    problem = forced_cooperative_problem
    sampler = KSampler.omega_limit(problem, problem.constant_segment([0.2, 0.4]), transient=5.0, count=3)
    samples = sampler.samples(problem)
    assert [s.time for s in samples] == [5.0, 6.0, 7.0]
    assert samples[1].label.startswith("t=6;")
    assert all(np.min(s.segment.history) > 0.0 for s in samples)
    assert len(sampler.assumptions) == 2


# ---------------------------------------------------------------- principal spectrum

def test_autonomous_linear_spectrum_is_a_point():
    problem = make_problem("linear", coefficients={"A": [[0.5]]})
    estimate = principal_spectrum(problem, KSampler.zero_section(problem), [0], threads=1)
    assert estimate.lower == estimate.upper
    assert estimate.lower == pytest.approx(0.5, abs=1e-2)


def test_logistic_spectrum_at_zero(logistic_problem):
    estimate = principal_spectrum(logistic_problem, KSampler.zero_section(logistic_problem), [0])
    assert estimate.lower == pytest.approx(1.0, abs=2e-2)
    assert estimate.samples[0].renormalizations >= 1


def test_periodically_forced_spectrum_is_the_mean_rate():
    problem = make_problem(
        "delayed_logistic",
        coefficients={"a": [{"constant": 0.2, "modes": [{"wave": [1], "cos": 0.5}]}], "b": [1.0]},
        frequencies=[np.pi / 2],
    )
    params = SpectrumParams(horizon=240.0, window=24.0, samples_per_dim=4)
    estimate = principal_spectrum(problem, KSampler.zero_section(problem, per_dim=4), [0], params)
    assert len(estimate.samples) == 4
    assert estimate.lower == pytest.approx(0.2, abs=2e-2)
    assert estimate.upper == pytest.approx(0.2, abs=2e-2)


def test_exponent_cache_is_reused(tmp_path):
    problem = make_problem("linear", coefficients={"A": [[0.5]]})
    sampler = KSampler.zero_section(problem)
    first = SpectrumEstimator(problem, cache_dir=tmp_path, threads=1)(sampler, [0])
    entries = list(tmp_path.glob("exponent_*.json"))
    assert len(entries) == 1

    cached = json.loads(entries[0].read_text())
    cached["exponent"] = 42.0
    entries[0].write_text(json.dumps(cached))
    second = SpectrumEstimator(problem, cache_dir=tmp_path, threads=1)(sampler, [0])
    assert first.upper == pytest.approx(0.5, abs=1e-2)
    assert second.upper == 42.0


def test_positive_start_dominates_other_directions(rng, cooperative_problem):
    problem = cooperative_problem
    trajectory = integrate(problem, problem.driver, problem.constant_segment([0.2, 0.4]), 20.0, keep_history=True)
    path = linearize_along(problem, trajectory)
    psi0 = Segment.constant_in_time(problem.positive_profile(), problem.delay_steps)
    reference, _ = lyapunov_exponent(problem, path, psi0, 20.0, 2.0)
    for _ in range(3):
        psi = Segment(rng.uniform(0.0, 1.0, problem.segment_shape))
        exponent, _ = lyapunov_exponent(problem, path, psi, 20.0, 2.0, require_positive=False)
        assert exponent <= reference + 1e-2
