import numpy as np
import pytest

from conftest import make_problem
from pfde.config import build_problem, load_problem, parse_config
from pfde.errors import CatalogError, ConfigError, ShapeMismatchError
from pfde.model import (
    TWO_PI,
    CustomReaction,
    DriverState,
    Mesh1D,
    Order,
    ReactionTerm,
    Segment,
    advance_driver,
    eval_jacobians,
    eval_reaction,
    register_custom_reaction,
    segment_compare,
    segment_norm,
)


# ---------------------------------------------------------------- driver

def test_advance_driver_identity_and_period():
    omega = DriverState([0.0], [1.0])
    assert advance_driver(omega, 0.0).coordinates[0] == 0.0
    assert advance_driver(omega, TWO_PI).coordinates[0] == pytest.approx(0.0, abs=1e-12)


def test_advance_driver_two_angles():
    omega = DriverState([0.5, 1.0], [1.0, np.sqrt(2.0)])
    moved = advance_driver(omega, 1.0)
    np.testing.assert_allclose(moved.coordinates, [1.5, np.mod(1.0 + np.sqrt(2.0), TWO_PI)], atol=1e-14)
    np.testing.assert_array_equal(moved.frequencies, omega.frequencies)


def test_driver_flow_property(rng):
    for _ in range(1000):
        omega = DriverState(rng.uniform(0, TWO_PI, 2), rng.normal(size=2))
        s, t = rng.uniform(-50, 50, 2)
        once = omega.advance(s + t).coordinates
        twice = omega.advance(s).advance(t).coordinates
        gap = np.abs(once - twice)
        assert np.all(np.minimum(gap, TWO_PI - gap) <= 1e-12 * max(1.0, abs(s) + abs(t)))


def test_driver_rejects_non_finite_time_and_mismatched_shapes():
    with pytest.raises(ValueError):
        DriverState([0.0], [1.0]).advance(np.inf)
    with pytest.raises(ShapeMismatchError):
        DriverState([0.0, 1.0], [1.0])


# ---------------------------------------------------------------- reactions

def test_delayed_logistic_at_zero_state():
    reaction = ReactionTerm.from_coefficients("delayed_logistic", 1, {"a": [1.0], "b": [1.0]})
    omega = DriverState.autonomous()
    np.testing.assert_array_equal(eval_reaction(reaction, omega, 0.3, [0.0], [7.0]), [0.0])
    jac_y, jac_d = eval_jacobians(reaction, omega, 0.3, [0.0], [7.0])
    assert jac_y[0, 0] == pytest.approx(1.0 - 7.0)
    assert jac_d[0, 0] == 0.0


def test_delayed_logistic_hand_derivatives():
    reaction = ReactionTerm.from_coefficients("delayed_logistic", 1, {"a": [1.0], "b": [1.0]})
    omega = DriverState.autonomous()
    assert eval_reaction(reaction, omega, 0.0, [0.5], [0.25])[0] == pytest.approx(0.375)
    jac_y, jac_d = eval_jacobians(reaction, omega, 0.0, [0.5], [0.25])
    assert jac_y[0, 0] == pytest.approx(0.75)
    assert jac_d[0, 0] == pytest.approx(-0.5)


def test_linear_matrix_product():
    reaction = ReactionTerm.from_coefficients("linear", 2, {"A": [[0.0, 1.0], [1.0, 0.0]]})
    f = eval_reaction(reaction, DriverState.autonomous(), 0.0, [1.0, 2.0], [0.0, 0.0])
    np.testing.assert_allclose(f, [2.0, 1.0])


def _finite_difference_jacobians(reaction, omega, x, y, y_del, step=1e-5):
    n = reaction.n
    jac_y = np.zeros((x.size, n, n))
    jac_d = np.zeros((x.size, n, n))
    for j in range(n):
        bump = np.zeros(n)
        bump[j] = step
        jac_y[:, :, j] = (reaction.evaluate(omega, x, y + bump, y_del)
                          - reaction.evaluate(omega, x, y - bump, y_del)) / (2 * step)
        jac_d[:, :, j] = (reaction.evaluate(omega, x, y, y_del + bump)
                          - reaction.evaluate(omega, x, y, y_del - bump)) / (2 * step)
    return jac_y, jac_d


@pytest.mark.parametrize("catalog,n,coefficients", [
    ("linear", 2, {"A": [[-1.0, {"constant": 0.5, "poly": [1.0, 2.0]}], [0.3, 0.0]],
                   "B": [[0.2, 0.0], [{"constant": 1.0, "modes": [{"wave": [1], "sin": 0.5}]}, 0.1]],
                   "source": [0.0, 1.0]}),
    ("delayed_logistic", 1, {"a": [{"constant": 1.0, "modes": [{"wave": [2], "cos": 0.4}]}],
                             "b": [{"constant": 1.0, "poly": [1.0, 0.0, -0.5]}]}),
    ("cooperative_lv", 2, {"r": [1.0, 0.5], "s": [1.0, {"constant": 2.0, "poly": [1.0, 1.0]}],
                           "C": [[0.0, 0.5], [0.3, 0.0]], "E": [[0.1, 0.2], [0.0, 0.4]]}),
])
def test_jacobians_match_finite_differences(rng, catalog, n, coefficients):
    reaction = ReactionTerm.from_coefficients(catalog, n, coefficients)
    for _ in range(10):
        omega = DriverState(rng.uniform(0, TWO_PI, 1), [1.0])
        x = rng.uniform(0.0, 1.0, 10)
        y = rng.uniform(-1.0, 2.0, (10, n))
        y_del = rng.uniform(-1.0, 2.0, (10, n))
        jac_y, jac_d = reaction.jacobians(omega, x, y, y_del)
        fd_y, fd_d = _finite_difference_jacobians(reaction, omega, x, y, y_del)
        np.testing.assert_allclose(jac_y, fd_y, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(jac_d, fd_d, rtol=1e-5, atol=1e-8)


def test_quasimonotone_flags():
    cooperative = ReactionTerm.from_coefficients(
        "cooperative_lv", 2, {"r": [1.0, 1.0], "s": [1.0, 1.0], "C": [[0.0, 0.5], [0.5, 0.0]]}
    )
    assert cooperative.quasimonotone
    competitive = ReactionTerm.from_coefficients(
        "cooperative_lv", 2, {"r": [1.0, 1.0], "s": [1.0, 1.0], "C": [[0.0, -0.5], [0.5, 0.0]]}
    )
    assert not competitive.quasimonotone
    logistic = ReactionTerm.from_coefficients("delayed_logistic", 1, {"a": [1.0], "b": [1.0]})
    assert not logistic.quasimonotone
    assert ReactionTerm.from_coefficients("delayed_logistic", 1, {"a": [1.0], "b": [0.0]}).quasimonotone
    oscillating = ReactionTerm.from_coefficients(
        "linear", 2, {"A": [[0.0, {"constant": 1.0, "modes": [{"wave": [1], "cos": 1.0}]}], [0.0, 0.0]]}
    )
    assert oscillating.quasimonotone


def test_quasimonotone_entries_sample_nonnegative(rng):
    reaction = ReactionTerm.from_coefficients(
        "cooperative_lv", 2,
        {"r": [1.0, -0.5], "s": [1.0, 1.0], "C": [[0.0, {"constant": 1.0, "modes": [{"wave": [1], "cos": 1.0}]}],
                                                   [0.3, 0.0]], "E": [[0.0, 0.2], [0.1, 0.0]]},
    )
    assert reaction.quasimonotone
    off = ~np.eye(2, dtype=bool)
    for _ in range(100):
        omega = DriverState(rng.uniform(0, TWO_PI, 1), [1.0])
        x = rng.uniform(0.0, 1.0, 100)
        jac_y, jac_d = reaction.jacobians(omega, x, rng.uniform(-2, 2, (100, 2)), rng.uniform(-2, 2, (100, 2)))
        assert np.min(jac_y[:, off]) >= -1e-12
        assert np.min(jac_d) >= -1e-12


def test_catalog_errors():
    with pytest.raises(CatalogError, match="unknown reaction catalog"):
        ReactionTerm.from_coefficients("gompertz", 1, {})
    with pytest.raises(CatalogError, match="missing coefficient table 'b'"):
        ReactionTerm.from_coefficients("delayed_logistic", 1, {"a": [1.0]})
    with pytest.raises(CatalogError, match="diagonal of C"):
        ReactionTerm.from_coefficients("cooperative_lv", 1, {"r": [1.0], "s": [1.0], "C": [[1.0]]})
    with pytest.raises(CatalogError, match="shape"):
        ReactionTerm.from_coefficients("linear", 2, {"A": [[1.0, 0.0]]})
    with pytest.raises(CatalogError, match="poly"):
        ReactionTerm.from_coefficients("linear", 1, {"A": [[{"poly": [1, 2, 3, 4, 5, 6]}]]})


def test_driver_dimension_must_match_wave_vectors():
    with pytest.raises(CatalogError, match="wave vectors"):
        make_problem("linear", coefficients={"A": [[{"constant": 1.0, "modes": [{"wave": [1, 1], "cos": 1.0}]}]]},
                     frequencies=[1.0])


def test_custom_reaction_registry():
    register_custom_reaction(CustomReaction(
        "test-decay", 1,
        func=lambda angles, x, y, y_del: -y + 0.5 * y_del,
        jacobian=lambda angles, x, y, y_del: (-np.ones((x.size, 1, 1)), 0.5 * np.ones((x.size, 1, 1))),
        quasimonotone=True,
    ))
    reaction = ReactionTerm.from_coefficients("custom", 1, name="test-decay")
    assert reaction.quasimonotone
    assert eval_reaction(reaction, DriverState.autonomous(), 0.0, [2.0], [1.0])[0] == pytest.approx(-1.5)
    with pytest.raises(CatalogError, match="no custom reaction"):
        ReactionTerm.from_coefficients("custom", 1, name="missing")


# ---------------------------------------------------------------- segments

def test_segment_compare_examples():
    zero = Segment(np.zeros((5, 9, 1)))
    one = Segment(np.ones((5, 9, 1)))
    mixed = Segment(np.linspace(-1, 1, 45).reshape(5, 9, 1))
    assert segment_compare(one, one) is Order.EQUAL
    assert segment_compare(zero, one) is Order.LEQ
    assert segment_compare(one, zero) is Order.GEQ
    assert segment_compare(mixed, zero) is Order.INCOMPARABLE
    with pytest.raises(ShapeMismatchError):
        segment_compare(zero, Segment(np.zeros((5, 10, 1))))


def test_segment_compare_is_a_partial_order(rng):
    shape = (5, 9, 2)
    for _ in range(200):
        a = Segment(rng.integers(0, 2, shape).astype(float))
        b = Segment(rng.integers(0, 2, shape).astype(float))
        c = Segment(rng.integers(0, 2, shape).astype(float))
        assert a.compare(a) is Order.EQUAL
        leq = a.compare(b) in (Order.LEQ, Order.EQUAL)
        geq = a.compare(b) in (Order.GEQ, Order.EQUAL)
        assert (leq and geq) == (a.compare(b) is Order.EQUAL)
        if a.compare(b) in (Order.LEQ, Order.EQUAL) and b.compare(c) in (Order.LEQ, Order.EQUAL):
            assert a.compare(c) in (Order.LEQ, Order.EQUAL)


def test_segment_norm_examples():
    assert segment_norm(Segment(np.zeros((5, 9, 1)))) == 0.0
    assert segment_norm(Segment(np.full((5, 9, 2), -3.5))) == 3.5
    x = Mesh1D(2.0, 8).nodes
    profile = np.sin(np.pi * x / 2.0)
    assert segment_norm(Segment.constant_in_time(profile, 4)) == pytest.approx(np.max(np.abs(profile)))


def test_segment_invariants():
    with pytest.raises(ConfigError, match="M >= 4"):
        Segment(np.zeros((4, 9, 1)))
    with pytest.raises(ConfigError, match="non-finite"):
        Segment(np.full((5, 9, 1), np.nan))


def test_dirichlet_segments_must_vanish_at_the_boundary(heat_problem):
    with pytest.raises(ConfigError, match="Dirichlet"):
        heat_problem.validate_segment(heat_problem.constant_segment([1.0]) + Segment(
            np.ones(heat_problem.segment_shape)))
    heat_problem.validate_segment(heat_problem.constant_segment([1.0]))


def test_mesh_invariants():
    mesh = Mesh1D(np.pi, 200)
    assert mesh.points == 201
    assert mesh.spacing * mesh.intervals == pytest.approx(np.pi, rel=1e-15)
    assert np.all(np.diff(mesh.nodes) > 0)
    with pytest.raises(ConfigError):
        Mesh1D(1.0, 7)


def test_problem_requires_positive_diffusion():
    with pytest.raises(ConfigError, match="strictly positive"):
        make_problem(diffusion=0.0)


def test_fingerprint_changes_with_coefficients():
    a = make_problem("linear", coefficients={"A": [[0.5]]})
    b = make_problem("linear", coefficients={"A": [[0.6]]})
    assert a.fingerprint() == make_problem("linear", coefficients={"A": [[0.5]]}).fingerprint()
    assert a.fingerprint() != b.fingerprint()


# ---------------------------------------------------------------- configuration

def _config(**overrides):
    data = {
        "problem": {"n": 1, "length": 1.0, "mesh_points": 17, "delay_steps": 16},
        "species": [{"diffusion": 0.1, "bc": "neumann"}],
        "reaction": {"catalog": "delayed_logistic", "coefficients": {"a": [1.0], "b": [1.0]}},
    }
    data.update(overrides)
    return data


def test_missing_key_is_named():
    with pytest.raises(ConfigError, match=r"species\.0\.diffusion"):
        parse_config(_config(species=[{"bc": "neumann"}]))


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError, match="problem.colour"):
        parse_config(_config(problem={"n": 1, "length": 1.0, "mesh_points": 17, "delay_steps": 16,
                                      "colour": "red"}))


def test_species_count_must_match():
    with pytest.raises(ConfigError, match="expected 2"):
        parse_config(_config(problem={"n": 2, "length": 1.0, "mesh_points": 17, "delay_steps": 16}))


def test_catalog_errors_surface_as_config_errors():
    config = parse_config(_config(reaction={"catalog": "nope"}))
    with pytest.raises(ConfigError, match="invalid problem"):
        build_problem(config)


@pytest.mark.parametrize("name,n", [
    ("delayed_logistic.toml", 1),
    ("cooperative.toml", 2),
    ("heat_decay.toml", 1),
    ("three_species.toml", 3),
])
def test_demo_configs_load(configs_dir, name, n):
    problem = load_problem(configs_dir / name)
    assert problem.n == n
    assert problem.mesh.points >= 9
