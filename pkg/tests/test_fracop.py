import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate
from scipy.special import gamma

from fraclog.core import Grid1D, NumericalError, ValidationError
from fraclog.fracop import (
    apply,
    assemble_operator,
    energy,
    green_solve,
    normalization_constant,
    stencil_weights,
    torsion_constant,
    torsion_exact,
)
from fraclog.spectral import principal_eigen

ALPHAS = st.floats(0.05, 0.95)


def _op(n, alpha=0.5):
    return assemble_operator(Grid1D(-1.0, 1.0, n), alpha)


def _fields(n):
    return arrays(np.float64, n, elements=st.floats(-1, 1))


def test_half_weights():
    w = stencil_weights(0.5, 4)
    assert w[0] == pytest.approx(4 / math.pi, rel=1e-14)
    assert w[1] == pytest.approx(-4 / (3 * math.pi), rel=1e-14)


@given(ALPHAS)
def test_weights_w0_gamma_ratio(alpha):
    w = stencil_weights(alpha, 1)
    assert w[0] == pytest.approx(gamma(2 * alpha + 1) / gamma(alpha + 1) ** 2, rel=1e-13)


@given(ALPHAS)
def test_weights_sign_and_partial_sums(alpha):
    w = stencil_weights(alpha, 10_000)
    assert w[0] > 0 and np.all(w[1:] < 0)
    partial = w[0] + 2 * np.cumsum(w[1:])
    assert np.all(partial > 0) and np.all(np.diff(partial) < 0)


@given(st.floats(0.25, 0.95))
def test_partial_sum_small_at_ten_thousand(alpha):
    # the tail decays like K^(-2 alpha), so the bound needs alpha >= 1/4
    w = stencil_weights(alpha, 10_000)
    assert 0 < w[0] + 2 * w[1:].sum() < 1e-2


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2, 1.5])
def test_weights_alpha_range(alpha):
    with pytest.raises(ValidationError):
        stencil_weights(alpha, 5)


def test_normalization_constant_half():
    # c_{1/2,1} = 1/pi for the Cauchy kernel
    assert normalization_constant(0.5) == pytest.approx(1 / math.pi, rel=1e-14)


def _getoor_quadrature(x, alpha=0.5):
    """(-Delta)^alpha (1-x^2)_+^alpha at x by adaptive quadrature of the singular integral."""
    w = lambda y: max(1.0 - y * y, 0.0) ** alpha
    f = lambda y: (2 * w(x) - w(x + y) - w(x - y)) / y ** (1 + 2 * alpha)
    ends = [0.0] + sorted({1 - x, 1 + x}) + [np.inf]
    total = sum(integrate.quad(f, a, b, limit=400, epsabs=1e-12, epsrel=1e-12)[0] for a, b in zip(ends, ends[1:]))
    return normalization_constant(alpha) * total


@pytest.mark.parametrize("x", [-0.5, 0.0, 0.75])
def test_getoor_quadrature_oracle(x):
    # the independent oracle first: the continuum identity holds at these points
    assert _getoor_quadrature(x) == pytest.approx(torsion_constant(0.5), abs=1e-6)


@pytest.mark.parametrize("x", [-0.5, 0.0, 0.75])
def test_getoor_discrete_matches_quadrature(x):
    op = _op(1023)  # nodes at multiples of 1/512 include x
    g = op.grid
    i = int(np.argmin(np.abs(g.nodes - x)))
    assert g.nodes[i] == pytest.approx(x, abs=1e-12)
    Lw = apply(op, (1 - g.nodes**2) ** 0.5)
    assert Lw[i] == pytest.approx(_getoor_quadrature(x), abs=5e-3)


def test_getoor_fixed_interior_convergence():
    errs = []
    for n in (127, 255, 511, 1023):
        op = _op(n)
        x = op.grid.nodes
        err = np.abs(apply(op, np.sqrt(1 - x**2)) - 1.0)
        errs.append(err[np.abs(x) <= 0.9].max())
    assert np.all(np.diff(errs) < 0)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.5)


def test_apply_zero_and_unit_vectors():
    op = _op(40)
    np.testing.assert_array_equal(apply(op, np.zeros(40)), np.zeros(40))
    for i, j in [(0, 0), (3, 7), (39, 1)]:
        e = np.zeros(40)
        e[i] = 1
        assert apply(op, e)[j] == op.matrix[j, i]


def test_apply_dimension_mismatch():
    with pytest.raises(ValidationError):
        apply(_op(10), np.zeros(11))
    with pytest.raises(ValidationError):
        energy(_op(10), np.zeros(9))


@given(ALPHAS, _fields(64), _fields(64))
def test_symmetry_and_linearity(alpha, u, v):
    op = _op(64, alpha)
    Lu, Lv = apply(op, u), apply(op, v)
    scale = op.scale * (1 + np.abs(u).sum()) * (1 + np.abs(v).sum())
    assert abs(Lu @ v - u @ Lv) <= 1e-12 * scale
    np.testing.assert_allclose(apply(op, u + v), Lu + Lv, atol=1e-12 * op.scale * 64)


@given(ALPHAS, _fields(64))
def test_positive_definite_and_homogeneous(alpha, u):
    op = _op(64, alpha)
    e = energy(op, u)
    if np.any(u != 0):
        assert e > 0
    else:
        assert e == 0
    assert energy(op, 2 * u) == pytest.approx(4 * e, rel=1e-12, abs=1e-300)


@given(ALPHAS, arrays(np.float64, 48, elements=st.floats(-1, 1)))
def test_fast_matvec_matches_dense(alpha, u):
    op = _op(48, alpha)
    np.testing.assert_allclose(op.fast_matvec(u), op.matrix @ u, atol=1e-12 * op.scale * 48)


@given(ALPHAS)
def test_m_matrix_sign_structure(alpha):
    m = _op(32, alpha).matrix
    off = m - np.diag(np.diag(m))
    assert np.all(np.diag(m) > 0) and np.all(off <= 0)


def test_rayleigh_quotient_at_eigenvector():
    op = _op(512)
    pair = principal_eigen(op)
    rq = energy(op, pair.psi) / (op.h * pair.psi @ pair.psi)
    assert rq == pytest.approx(pair.lam, rel=1e-6)


def test_torsion_at_centre():
    op = _op(1024)
    u = green_solve(op, np.ones(1024))
    centre = u[511:513].mean()
    assert torsion_exact(0.0, 0.5) == pytest.approx(1.0, abs=1e-14)
    assert centre == pytest.approx(1.0, abs=0.02)


def test_green_zero_and_linearity():
    op = _op(200)
    np.testing.assert_array_equal(green_solve(op, np.zeros(200)), 0.0)
    f = np.sin(np.arange(200))
    np.testing.assert_allclose(green_solve(op, 2 * f), 2 * green_solve(op, f), atol=1e-10)


@given(arrays(np.float64, 100, elements=st.floats(0, 10)))
def test_green_positivity(f):
    u = green_solve(_op(100), f)
    assert np.all(u >= -1e-12 * max(1.0, np.abs(f).max()))


def test_green_rejects_nonfinite():
    f = np.ones(20)
    f[3] = np.nan
    with pytest.raises(ValidationError):
        green_solve(_op(20), f)


def test_green_residual_guard(monkeypatch):
    import fraclog.fracop as fracop

    op = _op(30)
    monkeypatch.setattr(fracop.sla, "cho_solve", lambda c, f, check_finite=False: np.zeros_like(f))
    with pytest.raises(NumericalError) as exc:
        green_solve(op, np.ones(30))
    assert exc.value.residual > 0


def test_green_large_n_pcg_branch():
    op = _op(2500)
    u = green_solve(op, np.ones(2500))
    assert np.max(np.abs(op.matrix @ u - 1.0)) <= 1e-10
    assert u.max() == pytest.approx(1.0, abs=0.02)


def test_green_sup_bounded_in_n():
    sups = [green_solve(_op(n), np.ones(n)).max() for n in (64, 256, 1024)]
    assert max(sups) <= 1.0 + 1e-9
    assert np.ptp(sups) < 0.05
