"""Restricted fractional Laplacian on a 1-D grid by fractional centered differences.

The operator is ``L = (-Delta)^alpha`` with zero exterior values, realized as the
symmetric Toeplitz matrix ``L_ij = h^(-2 alpha) w_|i-j|``. The stencil's Fourier
symbol is exactly ``|2 sin(xi/2)|^(2 alpha)``, so no singular quadrature is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
from scipy.special import gamma

from .core import Grid1D, NumericalError, ValidationError

DENSE_LIMIT = 2048


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0,1), got {alpha}", "parameter")


def stencil_weights(alpha: float, count: int) -> np.ndarray:
    """Weights ``w_0..w_count`` of the fractional centered difference of order ``2 alpha``."""
    _check_alpha(alpha)
    if count < 1:
        raise ValidationError("count must be at least 1", "parameter")
    w = np.empty(count + 1)
    w[0] = gamma(2 * alpha + 1) / gamma(alpha + 1) ** 2
    k = np.arange(count)
    # w_{k+1} = w_k (k - alpha) / (k + 1 + alpha)
    w[1:] = w[0] * np.cumprod((k - alpha) / (k + 1 + alpha))
    return w


def normalization_constant(alpha: float, d: int = 1) -> float:
    """Constant in front of the singular integral, with |Gamma(-alpha)| in the denominator."""
    _check_alpha(alpha)
    return 4**alpha * math.gamma((d + 2 * alpha) / 2) / (math.pi ** (d / 2) * abs(math.gamma(-alpha)))


def torsion_constant(alpha: float) -> float:
    """``(-Delta)^alpha (1-x^2)_+^alpha`` on (-1,1); the torsion function is ``(1-x^2)^alpha`` over this."""
    return 2 ** (2 * alpha) * math.gamma(1 + alpha) * math.gamma(alpha + 0.5) / math.gamma(0.5)


def torsion_exact(x, alpha: float, radius: float = 1.0) -> np.ndarray:
    """Expected exit time from (-radius, radius) started at x."""
    x = np.asarray(x, dtype=float)
    return np.maximum(radius**2 - x * x, 0.0) ** alpha / torsion_constant(alpha)


@dataclass(frozen=True)
class DiscreteOperator:
    weights: np.ndarray = field(repr=False)
    scale: float
    n: int
    alpha: float
    grid: Grid1D = field(repr=False)

    @property
    def h(self) -> float:
        return self.grid.h

    @cached_property
    def matrix(self) -> np.ndarray:
        m = self.scale * sla.toeplitz(self.weights[: self.n])
        m.flags.writeable = False
        return m

    @cached_property
    def _cho(self):
        return sla.cho_factor(self.matrix, lower=False, check_finite=False)

    @cached_property
    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @cached_property
    def _symbol(self) -> np.ndarray:
        # circulant embedding of the Toeplitz matrix, size 2n
        w = self.scale * self.weights[: self.n]
        return sfft.rfft(np.concatenate([w, [0.0], w[:0:-1]]))

    def fast_matvec(self, u: np.ndarray) -> np.ndarray:
        """``L u`` in O(n log n); agrees with the dense product to round-off."""
        m = 2 * self.n
        return sfft.irfft(self._symbol * sfft.rfft(u, m), m)[: self.n]


def assemble_operator(grid: Grid1D, alpha: float) -> DiscreteOperator:
    w = stencil_weights(alpha, grid.n)
    w.flags.writeable = False
    return DiscreteOperator(weights=w, scale=grid.h ** (-2 * alpha), n=grid.n, alpha=alpha, grid=grid)


def _check_dim(op: DiscreteOperator, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (op.n,):
        raise ValidationError(f"field of shape {u.shape} does not match operator size {op.n}", "dimension")
    return u


def apply(op: DiscreteOperator, u) -> np.ndarray:
    return op.matrix @ _check_dim(op, u)


def energy(op: DiscreteOperator, u) -> float:
    """Discrete energy form ``h <L u, u>``."""
    u = _check_dim(op, u)
    return float(op.h * (u @ (op.matrix @ u)))


def _pcg(matvec, b, diag, x0=None, tol=1e-13, maxiter=20000):
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - matvec(x)
    z = r / diag
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b, np.inf) or 1.0
    for it in range(maxiter):
        if np.linalg.norm(r, np.inf) <= tol * bnorm:
            return x, it
        q = matvec(p)
        step = rz / (p @ q)
        x += step * p
        r -= step * q
        z = r / diag
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter


def green_solve(op: DiscreteOperator, f) -> np.ndarray:
    """Solve ``L u = f`` (discrete Green operator with zero exterior condition)."""
    f = _check_dim(op, f)
    if not np.all(np.isfinite(f)):
        raise ValidationError("right-hand side must be finite", "parameter")
    if op.n <= DENSE_LIMIT:
        u = sla.cho_solve(op._cho, f, check_finite=False)
    else:
        u, _ = _pcg(lambda v: op.matrix @ v, f, np.diag(op.matrix))
    scale = np.linalg.norm(f, np.inf)
    residual = float(np.linalg.norm(op.matrix @ u - f, np.inf))
    if residual > 1e-10 * max(scale, np.finfo(float).tiny):
        if scale == 0.0 and residual == 0.0:
            return u
        raise NumericalError("green_solve did not reach tolerance", residual)
    return u
