import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fraclog.core import (
    CANONICAL_CONFIG,
    Grid1D,
    NumericalError,
    Profile,
    ValidationError,
    b_field,
    build_grid,
    canonical_problem,
    load_config,
    obstacle_vector,
    validate_problem,
)


def test_grid_unit_interval():
    g = build_grid(canonical_problem(), 3)
    assert g.h == 0.5
    np.testing.assert_array_equal(g.nodes, [-0.5, 0.0, 0.5])


def test_grid_shifted_interval():
    np.testing.assert_allclose(Grid1D(0.0, 2.0, 3).nodes, [0.5, 1.0, 1.5])


@pytest.mark.parametrize("n", [1, 2])
def test_grid_too_coarse(n):
    with pytest.raises(ValidationError) as exc:
        build_grid(canonical_problem(), n)
    assert exc.value.hypothesis == "resolution"


@given(st.integers(3, 400), st.floats(-5, 5), st.floats(0.1, 10))
def test_grid_spacing_invariant(n, left, width):
    g = Grid1D(left, left + width, n)
    assert g.h == pytest.approx(width / (n + 1))
    np.testing.assert_allclose(g.nodes, left + g.h * np.arange(1, n + 1), atol=1e-12)
    assert not g.nodes.flags.writeable


def test_canonical_accepted():
    p = validate_problem(CANONICAL_CONFIG)
    x = np.linspace(-0.99, 0.99, 7)
    # b = max(0, |x| - 0.3), phi = 0.9 (1 - x^2)
    np.testing.assert_allclose(p.b_values(x), np.maximum(0.0, np.abs(x) - 0.3))
    np.testing.assert_allclose(p.phi_values(x), 0.9 * (1 - x**2))


def test_b_constant_violates_h1():
    cfg = dict(CANONICAL_CONFIG, b={"name": "constant", "params": {"value": 1.0}})
    with pytest.raises(ValidationError) as exc:
        validate_problem(cfg)
    assert exc.value.hypothesis == "H1"
    assert "closure(D_0)" in str(exc.value)


def test_b_vanishing_outside_closure_violates_h1():
    b = {"name": "indicator", "params": {"left": -0.9, "right": 0.9, "value": 1.0}}
    cfg = dict(CANONICAL_CONFIG, b={"name": "product", "params": {"factors": [CANONICAL_CONFIG["b"], b]}})
    with pytest.raises(ValidationError) as exc:
        validate_problem(cfg)
    assert exc.value.hypothesis == "H1"


def test_phi_above_one_violates_h2():
    cfg = dict(CANONICAL_CONFIG, phi={"name": "constant", "params": {"value": 2.0}})
    with pytest.raises(ValidationError) as exc:
        validate_problem(cfg)
    assert exc.value.hypothesis == "H2"


def test_phi_zero_violates_h2():
    cfg = dict(CANONICAL_CONFIG, phi={"name": "constant", "params": {"value": 0.0}})
    with pytest.raises(ValidationError) as exc:
        validate_problem(cfg)
    assert exc.value.hypothesis == "H2"


def test_phi_large_inside_d0_allowed():
    # the cap applies only off closure(D0)
    bump = {"name": "indicator", "params": {"left": -0.2, "right": 0.2, "value": 5.0}}
    validate_problem(dict(CANONICAL_CONFIG, phi=bump))


@pytest.mark.parametrize("d0", [[-1.0, 0.3], [0.3, -0.3], [0.5, 1.2]])
def test_geometry(d0):
    with pytest.raises(ValidationError) as exc:
        validate_problem(dict(CANONICAL_CONFIG, d0=d0))
    assert exc.value.hypothesis == "geometry"


def test_unknown_keys_rejected():
    with pytest.raises(ValidationError):
        validate_problem(dict(CANONICAL_CONFIG, colour="red"))
    with pytest.raises(ValidationError):
        validate_problem(dict(CANONICAL_CONFIG, b={"name": "constant", "params": {"valu": 1}}))


def test_validate_idempotent():
    p = canonical_problem()
    assert validate_problem(p) == p
    assert validate_problem(p.to_config()) == p


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(CANONICAL_CONFIG))
    assert load_config(path) == canonical_problem()
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_config(path)


def test_obstacle_values():
    p = canonical_problem()
    g = build_grid(p, 3)  # nodes -0.5, 0, 0.5
    psi = obstacle_vector(g, p)
    assert psi[1] == np.inf
    assert psi[0] == 1.0 and psi[2] == 1.0


def test_obstacle_endpoint_nodes_finite():
    p = canonical_problem(d0=[-0.5, 0.5])
    g = build_grid(p, 3)
    np.testing.assert_array_equal(obstacle_vector(g, p), [1.0, np.inf, 1.0])


def test_obstacle_empty_d0():
    cfg = dict(CANONICAL_CONFIG, d0=None, b={"name": "constant", "params": {"value": 1.0}})
    p = validate_problem(cfg)
    assert np.all(obstacle_vector(build_grid(p, 50), p) == 1.0)


@given(st.integers(3, 200), st.integers(1, 3))
def test_obstacle_refinement(n, levels):
    p = canonical_problem()
    coarse = obstacle_vector(build_grid(p, n), p)
    m = 2**levels
    fine = obstacle_vector(build_grid(p, m * (n + 1) - 1), p)
    # coarse node i sits at fine node m (i + 1) - 1
    np.testing.assert_array_equal(fine[m - 1 :: m], coarse)


@given(st.integers(3, 500))
def test_b_vanishes_where_unconstrained(n):
    p = canonical_problem()
    g = build_grid(p, n)
    assert np.all(b_field(g, p)[~np.isfinite(obstacle_vector(g, p))] == 0.0)


def test_distance_profile_needs_d0():
    with pytest.raises(ValidationError):
        Profile.make("distance_to_d0")(np.zeros(3), None)


def test_numerical_error_carries_residual():
    err = NumericalError("boom", 1e-3, step=4)
    assert err.residual == 1e-3 and err.diagnostics == {"step": 4}
