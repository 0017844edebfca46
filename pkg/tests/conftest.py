from pathlib import Path

import numpy as np
import pytest

from pfde.model import BoundarySpec, DriverState, Mesh1D, ProblemSpec, ReactionTerm

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def make_problem(catalog="linear", n=1, coefficients=None, *, bc="neumann", diffusion=0.1, length=1.0,
                 intervals=16, delay_steps=64, frequencies=(), phases=None, robin_alpha=(0.0, 0.0),
                 name=None) -> ProblemSpec:
    diffusion = tuple(np.broadcast_to(np.asarray(diffusion, dtype=float), (n,)))
    kinds = [bc] * n if isinstance(bc, str) else list(bc)
    frequencies = np.asarray(frequencies, dtype=float)
    phases = np.zeros(frequencies.size) if phases is None else np.asarray(phases, dtype=float)
    return ProblemSpec(
        n=n,
        diffusion=diffusion,
        mesh=Mesh1D(length, intervals),
        boundary=BoundarySpec(tuple(kinds), tuple(robin_alpha for _ in range(n))),
        reaction=ReactionTerm.from_coefficients(catalog, n, coefficients or {}, name),
        driver=DriverState(phases, frequencies),
        delay_steps=delay_steps,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def configs_dir() -> Path:
    return CONFIGS


@pytest.fixture
def heat_problem():
    """f = 0 on [0, pi] with Dirichlet ends, d = 1."""
    return make_problem("linear", bc="dirichlet", diffusion=1.0, length=np.pi, intervals=64)


@pytest.fixture
def logistic_problem():
    return make_problem("delayed_logistic", coefficients={"a": [1.0], "b": [1.0]})


@pytest.fixture
def cooperative_problem():
    return make_problem(
        "cooperative_lv", n=2,
        coefficients={
            "r": [1.0, 0.5],
            "s": [1.0, 1.0],
            "C": [[0.0, 0.5], [0.3, 0.0]],
            "E": [[0.0, 0.2], [0.1, 0.1]],
        },
        diffusion=(0.1, 0.05),
    )


@pytest.fixture
def forced_cooperative_problem():
    return make_problem(
        "cooperative_lv", n=2,
        coefficients={
            "r": [{"constant": 1.0, "modes": [{"wave": [1], "cos": 0.3}]}, 0.5],
            "s": [1.0, 1.0],
            "C": [[0.0, 0.5], [0.3, 0.0]],
            "E": [[0.0, 0.2], [0.1, 0.1]],
        },
        diffusion=(0.1, 0.05),
        frequencies=[1.0],
    )
