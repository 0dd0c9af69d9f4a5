"""Principal eigenpairs of ``L + diag(q)`` and the eigenvalue cut-off experiment."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import Grid1D, NumericalError, ProblemSpec, ValidationError, build_grid, fmt
from .fracop import DiscreteOperator, assemble_operator


@dataclass(frozen=True)
class EigenPair:
    lam: float
    psi: np.ndarray = field(repr=False)
    iterations: int = 0
    residual: float = 0.0


def _potential(op: DiscreteOperator, q) -> np.ndarray:
    if q is None:
        return np.zeros(op.n)
    q = np.broadcast_to(np.asarray(q, dtype=float), (op.n,))
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ValidationError("potential must be finite and nonnegative", "parameter")
    return q


def principal_eigen(
    op: DiscreteOperator,
    q=None,
    tol: float = 1e-10,
    residual_tol: float = 1e-8,
    max_iter: int = 10_000,
) -> EigenPair:
    """Smallest eigenvalue of ``L + diag(q)`` by unshifted inverse power iteration.

    Starting from the constant vector keeps every iterate positive (the inverse
    of the M-matrix ``L + diag(q)`` is entrywise positive). The eigenvector is
    normalized so that ``h * sum(psi**2) == 1``. The residual target is raised to
    the round-off level of the matrix product when that is larger.
    """
    q = _potential(op, q)
    m = op.matrix + np.diag(q)
    cho = sla.cho_factor(m, check_finite=False)
    h = op.h
    x = np.ones(op.n) / np.sqrt(h * op.n)
    # |M x - lam x| cannot go below the rounding error of M x
    floor = 64 * np.finfo(float).eps * np.max(np.abs(m).sum(axis=1)) * np.linalg.norm(x)
    residual_tol = max(residual_tol, floor)
    lam = np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        y = sla.cho_solve(cho, x, check_finite=False)
        x = y / np.sqrt(h * (y @ y))
        mx = m @ x
        lam_new = float(x @ mx) / float(x @ x)
        res = float(np.linalg.norm(mx - lam_new * x))
        done = abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)) and res <= residual_tol
        lam = lam_new
        if done:
            break
    else:
        raise NumericalError("inverse iteration stagnated", res, iterations=max_iter, lam=lam)
    if not np.all(x > 0):
        raise NumericalError("principal eigenvector lost positivity", res)
    return EigenPair(lam, x, it, res)


def rayleigh_quotient(op: DiscreteOperator, v, q=None) -> float:
    q = _potential(op, q)
    v = np.asarray(v, dtype=float)
    return float(v @ (op.matrix @ v) + v @ (q * v)) / float(v @ v)


def subdomain_grid(grid: Grid1D, problem: ProblemSpec) -> Grid1D:
    """Grid over d0 with as many nodes as the parent grid has strictly inside d0.

    The submatrix of the parent operator on those nodes is a rescaled copy of the
    subdomain operator with spacing no larger than the parent's, so the
    subdomain eigenvalue bounds every cut-off eigenvalue from above.
    """
    if problem.d0 is None:
        raise ValidationError("problem has an empty d0", "geometry")
    m = int(np.count_nonzero(problem.in_d0(grid.nodes)))
    return Grid1D(problem.d0[0], problem.d0[1], m)


def window(problem: ProblemSpec, n: int) -> tuple[float, float]:
    """Discrete existence window ``(lambda_1^D, lambda_1^{D_0})``."""
    grid = build_grid(problem, n)
    lam_d = principal_eigen(assemble_operator(grid, problem.alpha)).lam
    if problem.d0 is None:
        return lam_d, np.inf
    sub = subdomain_grid(grid, problem)
    lam_d0 = principal_eigen(assemble_operator(sub, problem.alpha)).lam
    return lam_d, lam_d0


@dataclass(frozen=True)
class PotentialSchedule:
    ks: tuple
    potentials: tuple = field(repr=False)

    @classmethod
    def indicator(cls, grid: Grid1D, problem: ProblemSpec, ks) -> "PotentialSchedule":
        """``q_k = k * 1`` on the nodes outside closure(d0)."""
        outside = ~problem.in_closure_d0(grid.nodes)
        pots = tuple(float(k) * outside.astype(float) for k in ks)
        return cls(tuple(ks), pots)

    def check(self, grid: Grid1D, problem: ProblemSpec) -> None:
        closure = problem.in_closure_d0(grid.nodes)
        prev = None
        for q in self.potentials:
            q = np.asarray(q)
            if q.shape != (grid.n,) or np.any(q < 0):
                raise ValidationError("potentials must be nonnegative fields on the grid", "schedule")
            if np.any(q[closure] != 0):
                raise ValidationError("potential supported inside closure(D_0)", "schedule")
            if prev is not None and np.any(q < prev):
                raise ValidationError("potentials must be nondecreasing in k", "schedule")
            prev = q


@dataclass
class CutoffReport:
    ks: list
    lambdas: list
    gaps: list
    iterations: list
    l2_to_target: list
    lam_target: float

    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.lambdas) > 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "lambda_k", "gap", "iterations"])
        for row in zip(self.ks, self.lambdas, self.gaps, self.iterations):
            w.writerow([fmt(row[0]), fmt(row[1]), fmt(row[2]), row[3]])
        return buf.getvalue()


def eigen_cutoff_experiment(
    problem: ProblemSpec,
    schedule: PotentialSchedule,
    grid: Grid1D,
    c=None,
) -> CutoffReport:
    """Principal eigenvalues of ``L + c + q_k`` and the subdomain target ``lambda_1^{D_0}[c]``."""
    schedule.check(grid, problem)
    op = assemble_operator(grid, problem.alpha)
    c = np.zeros(grid.n) if c is None else np.asarray(c, dtype=float)
    inside = problem.in_d0(grid.nodes)
    sub = subdomain_grid(grid, problem)
    target = principal_eigen(assemble_operator(sub, problem.alpha), c[inside])

    lams, its, l2 = [], [], []
    for q in schedule.potentials:
        pair = principal_eigen(op, c + q)
        lams.append(pair.lam)
        its.append(pair.iterations)
        # qualitative only: eigenvector restricted to d0 vs the subdomain eigenvector
        piece = pair.psi[inside]
        piece = piece / np.sqrt(sub.h * (piece @ piece))
        l2.append(float(np.sqrt(sub.h * np.sum((piece - target.psi) ** 2))))
    gaps = [target.lam - lam for lam in lams]
    return CutoffReport(list(schedule.ks), lams, gaps, its, l2, target.lam)
