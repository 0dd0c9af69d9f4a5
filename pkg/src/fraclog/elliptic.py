"""Positive steady states of the logistic equation and the elliptic obstacle problem."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import NumericalError, ProblemSpec, ValidationError, b_field, obstacle_vector, phi_field
from .fracop import DiscreteOperator
from .lcp import ActiveSetSolver
from .spectral import principal_eigen, subdomain_grid
from .fracop import assemble_operator

TOL = 1e-8
EPS_SUB = 1e-3
THETA_UP = 1.05


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    NO_POSITIVE = "NoPositiveSolution"
    MAX_ITER = "MaxIter"


@dataclass
class SolveReport:
    u: np.ndarray = field(repr=False)
    status: Status
    iterations: int
    residual: float
    eigen_check: float
    monotone: bool = True
    lam_d: float = float("nan")
    uniqueness_gap: float | None = None
    upward_iterations: int | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "residual": self.residual,
            "eigen_check": self.eigen_check,
            "monotone": self.monotone,
            "lambda_1_D": self.lam_d,
            "uniqueness_gap": self.uniqueness_gap,
            "u": self.u.tolist(),
        }


@dataclass
class ObstacleSolveReport:
    u: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    comp_residual: float
    eq_residual: float
    active: np.ndarray = field(repr=False)
    iterations: int
    warm_T: float

    def to_dict(self) -> dict:
        return {
            "comp_residual": self.comp_residual,
            "eq_residual": self.eq_residual,
            "active_nodes": int(self.active.sum()),
            "iterations": self.iterations,
            "warm_T": self.warm_T,
            "u": self.u.tolist(),
            "mu": self.mu.tolist(),
        }


def logistic_residual(op: DiscreteOperator, b, a: float, p: float, u) -> np.ndarray:
    """``L u - a u + b u^p``; zero at a steady state, nonnegative at a supersolution."""
    return op.matrix @ u - a * u + b * u**p


def lambda_d0(problem: ProblemSpec, op: DiscreteOperator) -> float:
    if problem.d0 is None:
        return np.inf
    sub = subdomain_grid(op.grid, problem)
    return principal_eigen(assemble_operator(sub, problem.alpha)).lam


def supersolution(problem: ProblemSpec, op: DiscreteOperator, a: float, p: float, b=None, k_max: float = 1e10):
    """Supersolution ``c psi_K`` with ``psi_K`` the principal eigenvector for ``K * 1_{outside d0}``.

    ``K`` doubles until the eigenvalue reaches ``a``; ``c`` is the smallest scale with
    ``b (c psi)^(p-1) >= K`` off d0. Returns None if no ``K <= k_max`` works, which
    happens exactly when ``a`` is at or beyond the discrete cut-off limit.
    """
    b = b_field(op.grid, problem) if b is None else b
    outside = ~problem.in_closure_d0(op.grid.nodes)
    K = max(a, 1.0)
    while True:
        pair = principal_eigen(op, K * outside)
        if pair.lam >= a:
            break
        K *= 2.0
        if K > k_max:
            return None
    psi = pair.psi
    # work in logs: (K / b)^(1/(p-1)) / psi can be huge for p close to 1
    log_c = np.max((np.log(K) - np.log(b[outside])) / (p - 1) - np.log(psi[outside])) if outside.any() else 0.0
    return np.exp(log_c + np.log(psi))


def _newton_down(op, b, a, p, u, tol, max_iter):
    """Newton iteration from a supersolution; convexity keeps it monotone from above."""
    L = op.matrix
    monotone = True
    res = np.inf
    for it in range(max_iter + 1):
        F = L @ u - a * u + b * u**p
        res = float(np.max(np.abs(F)))
        if res <= tol:
            return u, it, res, monotone
        if it == max_iter:
            break
        J = L + np.diag(p * b * u ** (p - 1) - a)
        try:
            cho = sla.cho_factor(J, check_finite=False)
        except np.linalg.LinAlgError:
            raise NumericalError("Newton matrix lost definiteness", res, iteration=it) from None
        u_new = sla.cho_solve(cho, (p - 1) * b * u**p, check_finite=False)
        if np.any(u_new > u + 1e-12 * np.max(u)):
            monotone = False
        u = np.maximum(u_new, 0.0)
    return u, max_iter, res, monotone


def _upward(op, b, a, p, u_star, tol, max_iter, eps=EPS_SUB, theta=THETA_UP):
    """Monotone shifted iteration from ``eps * phi_1`` below the bracket ``theta * u_star``.

    ``theta * u_star`` is a supersolution for any theta >= 1; the nodewise shift
    keeps ``(s + a) u - b u^p`` nondecreasing up to it.
    """
    L = op.matrix
    phi1 = principal_eigen(op).psi
    upper = theta * u_star
    while True:
        w = eps * phi1
        if np.all(w <= upper) and np.all(logistic_residual(op, b, a, p, w) <= 0):
            break
        eps /= 10
        if eps < 1e-12:
            raise NumericalError("no admissible subsolution found", np.nan)
    s = np.maximum(0.0, p * b * upper ** (p - 1) - a)
    cho = sla.cho_factor(L + np.diag(s), check_finite=False)
    increasing = True
    for it in range(max_iter + 1):
        F = L @ w - a * w + b * w**p
        res = float(np.max(np.abs(F)))
        if res <= tol:
            return w, it, increasing
        w_new = sla.cho_solve(cho, (s + a) * w - b * w**p, check_finite=False)
        if np.any(w_new < w - 1e-12 * np.max(w)):
            increasing = False
        w = w_new
    raise NumericalError("upward monotone iteration hit max_iter", res)


def solve_logistic(
    problem: ProblemSpec,
    op: DiscreteOperator,
    a: float | None = None,
    p: float | None = None,
    tol: float = TOL,
    max_iter: int = 5000,
    check_uniqueness: bool = False,
    upper=None,
    b=None,
) -> SolveReport:
    """Positive steady state of ``L u = a u - b u^p`` (zero exterior condition).

    Newton's method started at the supersolution built by :func:`supersolution`;
    iterates decrease monotonically to the maximal solution below it. With
    ``check_uniqueness`` the minimal solution above ``eps * phi_1`` is computed
    too, and their sup distance is stored in ``uniqueness_gap``.

    ``upper`` is an optional extra supersolution (checked) that tightens the start.
    """
    a = problem.a if a is None else float(a)
    p = problem.p if p is None else float(p)
    if not a > 0 or not p > 1:
        raise ValidationError("need a > 0 and p > 1", "parameter")
    b = b_field(op.grid, problem) if b is None else np.asarray(b, dtype=float)
    first = principal_eigen(op)
    lam_d = first.lam

    if a <= lam_d:
        start = first.psi
    else:
        start = supersolution(problem, op, a, p, b)
        if start is None:
            return SolveReport(np.zeros(op.n), Status.NO_POSITIVE, 0, 0.0, float("nan"), True, lam_d)
    if upper is not None:
        upper = np.asarray(upper, dtype=float)
        F_up = logistic_residual(op, b, a, p, upper)
        if np.all(upper > 0) and np.all(F_up >= -tol):
            start = np.minimum(start, upper)

    u, its, res, monotone = _newton_down(op, b, a, p, start, tol, max_iter)
    if res > tol:
        return SolveReport(u, Status.MAX_ITER, its, res, float("nan"), monotone, lam_d)
    if np.max(u) <= 1e-6:
        return SolveReport(u, Status.NO_POSITIVE, its, res, float("nan"), monotone, lam_d)
    if not np.all(u > 0):
        raise NumericalError("steady state is not strictly positive", res)
    eigen_check = abs(a - principal_eigen(op, b * u ** (p - 1)).lam)
    report = SolveReport(u, Status.CONVERGED, its, res, eigen_check, monotone, lam_d)
    if check_uniqueness:
        w, up_its, _ = _upward(op, b, a, p, u, tol, max_iter=100_000)
        report.uniqueness_gap = float(np.max(np.abs(w - u)))
        report.upward_iterations = up_its
    return report


def solve_obstacle_elliptic(
    problem: ProblemSpec,
    op: DiscreteOperator,
    a: float | None = None,
    warm_T: float = 20.0,
    warm_dt: float | None = None,
    tol: float = TOL,
    retries: int = 3,
) -> ObstacleSolveReport:
    """Solve ``L u - a u + mu = 0, u <= psi, mu >= 0, mu (psi - u) = 0`` with ``u > 0``.

    ``L - a`` is indefinite inside the existence window, so the active set comes
    from a parabolic obstacle run (its large-time limit is the steady state); a
    primal-dual active set iteration then solves the complementarity system exactly.
    """
    from .parabolic import evolve_obstacle

    a = problem.a if a is None else float(a)
    psi = obstacle_vector(op.grid, problem)
    A = op.matrix - a * np.eye(op.n)
    solver = ActiveSetSolver(A)
    lam_d = principal_eigen(op).lam
    if a <= lam_d:
        # L - a is positive definite: zero is the only solution
        res = solver.solve(np.zeros(op.n), psi)
        return ObstacleSolveReport(res.x, res.mu, res.comp_residual, res.eq_residual, res.active, res.iterations, 0.0)
    lam_0 = lambda_d0(problem, op)
    if a >= lam_0:
        raise ValidationError(
            f"a={a} outside the existence window ({lam_d:.6g}, {lam_0:.6g})", "window"
        )

    dt = warm_dt if warm_dt is not None else min(0.05, 0.5 / a)
    v = phi_field(op.grid, problem)
    T = warm_T
    last_error = None
    for _ in range(retries + 1):
        traj = evolve_obstacle(problem, op, a, v, T, dt, snapshot_every=None)
        v = traj.final
        finite = np.isfinite(psi)
        guess = finite & ((v >= psi - 1e-10) | (traj.multipliers[-1] > 0))
        try:
            res = solver.solve(np.zeros(op.n), psi, guess)
        except (np.linalg.LinAlgError, NumericalError) as exc:
            last_error = exc
            T *= 2
            continue
        u = res.x
        if np.all(u > 0) and res.comp_residual <= tol and np.all(res.mu >= -1e-12):
            return ObstacleSolveReport(u, res.mu, res.comp_residual, res.eq_residual, res.active, res.iterations, T)
        last_error = NumericalError("active set polish gave an inadmissible field", res.comp_residual)
        T *= 2
    raise NumericalError(f"obstacle solve failed after warm starts up to T={T}: {last_error}", np.nan)
