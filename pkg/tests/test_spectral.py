import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fraclog.core import Grid1D, NumericalError, ValidationError, build_grid
from fraclog.fracop import assemble_operator, energy
from fraclog.spectral import (
    PotentialSchedule,
    eigen_cutoff_experiment,
    principal_eigen,
    rayleigh_quotient,
    subdomain_grid,
    window,
)


def _op(n, alpha=0.5, r=1.0):
    return assemble_operator(Grid1D(-r, r, n), alpha)


@pytest.fixture(scope="module")
def lam_refined():
    return {n: principal_eigen(_op(n)).lam for n in (512, 1024, 2048)}


def test_lambda_richardson_oracle(lam_refined):
    l1, l2, l3 = (lam_refined[n] for n in (512, 1024, 2048))
    # Aitken extrapolation needs a geometric error sequence
    ratio = (l1 - l2) / (l2 - l3)
    assert 1.2 < ratio < 4.5
    limit = l3 - (l2 - l3) ** 2 / ((l1 - l2) - (l2 - l3))
    assert lam_refined[1024] == pytest.approx(limit, abs=0.01)
    assert lam_refined[1024] == pytest.approx(1.158, abs=0.01)


def test_eigenpair_invariants():
    op = _op(300)
    pair = principal_eigen(op)
    assert pair.lam > 0
    assert np.all(pair.psi > 0)
    assert op.h * pair.psi @ pair.psi == pytest.approx(1.0, rel=1e-12)
    assert np.linalg.norm(op.matrix @ pair.psi - pair.lam * pair.psi) <= 1e-8


@given(st.floats(0.0, 50.0))
def test_constant_shift(c):
    op = _op(128)
    base = principal_eigen(op)
    shifted = principal_eigen(op, np.full(128, c))
    assert shifted.lam == pytest.approx(base.lam + c, abs=1e-9)
    np.testing.assert_allclose(shifted.psi, base.psi, atol=1e-6)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_scaling_identity(alpha):
    unit = principal_eigen(_op(512, alpha)).lam
    half = principal_eigen(_op(256, alpha, r=0.5)).lam  # same spacing
    assert half == pytest.approx(2 ** (2 * alpha) * unit, rel=0.01)


@given(arrays(np.float64, 64, elements=st.floats(0.01, 1)), arrays(np.float64, 64, elements=st.floats(0, 20)))
def test_rayleigh_ritz(v, q):
    op = _op(64)
    lam = principal_eigen(op, q).lam
    assert rayleigh_quotient(op, v, q) >= lam - 1e-9 * lam
    # the energy-form version agrees with the plain quotient
    rq = (energy(op, v) + op.h * np.sum(q * v * v)) / (op.h * v @ v)
    assert rq == pytest.approx(rayleigh_quotient(op, v, q), rel=1e-12)


def test_rayleigh_ritz_equality():
    op = _op(64)
    q = np.linspace(0, 3, 64)
    pair = principal_eigen(op, q)
    assert rayleigh_quotient(op, pair.psi, q) == pytest.approx(pair.lam, rel=1e-10)


@given(arrays(np.float64, 48, elements=st.floats(0, 10)), st.integers(0, 47), st.floats(0.5, 10))
def test_potential_monotonicity(q, j, bump):
    op = _op(48)
    q2 = q.copy()
    q2[j] += bump
    assert principal_eigen(op, q).lam < principal_eigen(op, q2).lam


def test_domain_monotonicity(problem):
    lam_d, lam_d0 = window(problem, 512)
    assert lam_d < lam_d0
    assert lam_d0 == pytest.approx(3.86, abs=0.05)


def test_subdomain_grid_spacing(problem):
    g = build_grid(problem, 1024)
    sub = subdomain_grid(g, problem)
    assert sub.h <= g.h and sub.h == pytest.approx(g.h, rel=0.01)


def test_stagnation_error():
    with pytest.raises(NumericalError):
        principal_eigen(_op(64), max_iter=1)


def test_negative_potential_rejected():
    with pytest.raises(ValidationError):
        principal_eigen(_op(10), -np.ones(10))


@pytest.fixture(scope="module")
def cutoff_report():
    from fraclog.core import canonical_problem

    problem = canonical_problem()
    grid = build_grid(problem, 1024)
    sched = PotentialSchedule.indicator(grid, problem, [0, 10, 100, 1000, 10_000])
    return eigen_cutoff_experiment(problem, sched, grid), grid


def test_cutoff_monotone_and_bounded(cutoff_report):
    rep, grid = cutoff_report
    assert rep.strictly_increasing()
    assert all(lam <= rep.lam_target for lam in rep.lambdas)
    assert all(g >= 0 for g in rep.gaps)


def test_cutoff_k0_is_lambda_d(cutoff_report):
    rep, grid = cutoff_report
    assert rep.lambdas[0] == pytest.approx(principal_eigen(assemble_operator(grid, 0.5)).lam, rel=1e-12)


def test_cutoff_gap_at_largest_k(cutoff_report):
    rep, _ = cutoff_report
    assert rep.gaps[-1] <= 0.02 * rep.lam_target


def test_cutoff_csv(cutoff_report):
    rep, _ = cutoff_report
    lines = rep.to_csv().splitlines()
    assert lines[0] == "k,lambda_k,gap,iterations"
    assert len(lines) == 6


def test_schedule_support_violation(problem):
    grid = build_grid(problem, 64)
    bad = PotentialSchedule((1,), (np.ones(64),))
    with pytest.raises(ValidationError):
        eigen_cutoff_experiment(problem, bad, grid)


def test_schedule_must_increase(problem):
    grid = build_grid(problem, 64)
    sched = PotentialSchedule.indicator(grid, problem, [10, 1])
    with pytest.raises(ValidationError):
        sched.check(grid, problem)
