"""Upper-obstacle complementarity problems ``A x + mu = r, x <= psi, mu >= 0, mu (psi - x) = 0``.

``psi`` may contain ``+inf`` (unconstrained nodes). The workhorse is a primal-dual
active set iteration with cached Cholesky factors of the inactive blocks; a plain
projected SOR is kept as an independent reference solver.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import NumericalError


@dataclass
class LcpResult:
    x: np.ndarray
    mu: np.ndarray
    active: np.ndarray
    iterations: int
    comp_residual: float
    eq_residual: float


class FactorCache:
    """LRU cache of Cholesky factors keyed by a boolean mask."""

    def __init__(self, build, size: int = 8):
        self._build = build
        self._size = size
        self._store: OrderedDict[bytes, object] = OrderedDict()
        self.misses = 0

    def get(self, mask: np.ndarray):
        key = np.packbits(mask).tobytes()
        if key in self._store:
            self._store.move_to_end(key)
            return self._store[key]
        self.misses += 1
        value = self._build(mask)
        self._store[key] = value
        if len(self._store) > self._size:
            self._store.popitem(last=False)
        return value


def complementarity_residual(x, mu, psi) -> float:
    finite = np.isfinite(psi)
    if not np.any(finite):
        return 0.0
    return float(np.max(np.abs(mu[finite] * (psi[finite] - x[finite]))))


class BlockInverse:
    """Inverse of the principal submatrix ``A[I, I]`` for a changing index set ``I``.

    Small changes of ``I`` are absorbed by Schur-complement updates (removing or
    bordering rows/columns) in O(m^2 k); large changes, or every ``refresh``
    updates, trigger a fresh Cholesky-based inverse.
    """

    def __init__(self, A: np.ndarray, max_change: int = 48, refresh: int = 100):
        self.A = A
        self.max_change = max_change
        self.refresh = refresh
        self.mask = None
        self.G = None
        self.updates = 0
        self.rebuilds = 0

    def _rebuild(self, mask):
        idx = np.flatnonzero(mask)
        self.mask = mask.copy()
        self.updates = 0
        self.rebuilds += 1
        if idx.size == 0:
            self.G = np.zeros((0, 0))
            return
        cho = sla.cho_factor(self.A[np.ix_(idx, idx)], check_finite=False)
        self.G = sla.cho_solve(cho, np.eye(idx.size), check_finite=False)

    def get(self, mask: np.ndarray) -> np.ndarray:
        if self.mask is not None and np.array_equal(mask, self.mask):
            return self.G
        if self.mask is None or self.updates >= self.refresh:
            self._rebuild(mask)
            return self.G
        removed = self.mask & ~mask
        added = mask & ~self.mask
        if removed.sum() + added.sum() > self.max_change:
            self._rebuild(mask)
            return self.G
        idx = np.flatnonzero(self.mask)
        G = self.G
        if removed.any():
            pos = removed[idx]
            keep = ~pos
            Gkp = G[np.ix_(keep, pos)]
            G = G[np.ix_(keep, keep)] - Gkp @ np.linalg.solve(G[np.ix_(pos, pos)], Gkp.T)
            idx = idx[keep]
        if added.any():
            new = np.flatnonzero(added)
            A_is = self.A[np.ix_(idx, new)]
            B = G @ A_is
            S = self.A[np.ix_(new, new)] - A_is.T @ B
            S_inv = np.linalg.inv(S)
            BS = B @ S_inv
            top = np.hstack([G + BS @ B.T, -BS])
            bottom = np.hstack([-BS.T, S_inv])
            G = np.vstack([top, bottom])
            idx = np.concatenate([idx, new])
            order = np.argsort(idx)
            G = G[np.ix_(order, order)]
        self.G = 0.5 * (G + G.T)
        self.mask = mask.copy()
        self.updates += 1
        return self.G


@dataclass
class ActiveSetSolver:
    """Primal-dual active set solver for a fixed matrix ``A`` whose inactive blocks are SPD."""

    A: np.ndarray
    matvec: object = None
    max_iter: int = 200
    _inv: BlockInverse = field(init=False, repr=False)

    def __post_init__(self):
        self._inv = BlockInverse(self.A)
        if self.matvec is None:
            self.matvec = self.A.__matmul__

    def solve(self, r, psi, active=None) -> LcpResult:
        A = self.A
        n = A.shape[0]
        finite = np.isfinite(psi)
        psi_f = np.where(finite, psi, 0.0)
        scale = np.diag(A)
        if active is None:
            active = np.zeros(n, dtype=bool)
        active = active & finite
        for it in range(1, self.max_iter + 1):
            inactive = ~active
            x = np.where(active, psi_f, 0.0)
            rhs = r - self.matvec(x)
            if inactive.any():
                x[inactive] = self._inv.get(inactive) @ rhs[inactive]
            mu = r - self.matvec(x)
            mu[inactive] = 0.0
            new_active = finite & (mu + scale * (x - psi_f) > 0)
            if np.array_equal(new_active, active):
                break
            active = new_active
        else:
            raise NumericalError("active set iteration did not settle", np.nan, iterations=self.max_iter)
        eq_res = r - self.matvec(x) - mu
        return LcpResult(
            x=x,
            mu=mu,
            active=active,
            iterations=it,
            comp_residual=complementarity_residual(x, mu, psi),
            eq_residual=float(np.max(np.abs(eq_res))),
        )


def projected_sor(A, r, psi, x0=None, omega: float = 1.5, tol: float = 1e-10, max_sweeps: int = 100_000):
    """Projected SOR for the upper-obstacle LCP; returns ``(x, mu, sweeps)``.

    Converges for symmetric positive definite ``A`` and ``0 < omega < 2``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    x = np.minimum(np.zeros(n) if x0 is None else np.array(x0, dtype=float), psi)
    diag = np.diag(A).copy()
    for sweep in range(1, max_sweeps + 1):
        delta = 0.0
        for i in range(n):
            gi = r[i] - A[i] @ x
            xi = min(psi[i], x[i] + omega * gi / diag[i])
            delta = max(delta, abs(xi - x[i]))
            x[i] = xi
        if delta <= tol:
            break
    else:
        raise NumericalError("projected SOR did not converge", delta, sweeps=max_sweeps)
    mu = r - A @ x
    mu[x < psi] = 0.0
    return x, mu, sweep
