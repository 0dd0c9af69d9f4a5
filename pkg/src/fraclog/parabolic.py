"""Time integration of the logistic evolution and the parabolic obstacle problem.

Implicit Euler in ``L`` and in the linear growth ``a v``; the absorption ``b v^p``
is linearized as ``b v_old^(p-1) v_new``. Every step is therefore one linear
solve with an M-matrix, which keeps iterates nonnegative.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import NumericalError, fmt, ProblemSpec, ValidationError, b_field, obstacle_vector
from .fracop import DiscreteOperator
from .lcp import ActiveSetSolver, FactorCache, complementarity_residual

SNAPSHOT_EVERY = 0.1
MAX_HALVINGS = 10


@dataclass
class Trajectory:
    """Snapshots at selected times plus per-step diagnostics."""

    times: np.ndarray
    snapshots: np.ndarray = field(repr=False)
    step_times: np.ndarray = field(repr=False)
    sup_norm: np.ndarray = field(repr=False)
    min_value: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    dvdt_norm: np.ndarray = field(repr=False)
    bound_slack: np.ndarray = field(repr=False)
    comp_residual: np.ndarray | None = field(default=None, repr=False)
    multipliers: np.ndarray | None = field(default=None, repr=False)
    phi_sup: float = 0.0
    a: float = 0.0
    halvings: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError(f"no snapshot recorded at t={t}", "parameter")
        return i

    def at(self, t: float) -> np.ndarray:
        return self.snapshots[self.index_of(t)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        obstacle = self.comp_residual is not None
        header = ["t", "sup_norm", "energy"] + (["comp_residual"] if obstacle else []) + ["bound_slack"]
        w.writerow(header)
        for k in range(len(self.step_times)):
            row = [self.step_times[k], self.sup_norm[k], self.energy[k]]
            if obstacle:
                row.append(self.comp_residual[k])
            row.append(self.bound_slack[k])
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()


class _ShiftedSolver:
    """Solves ``(I/dt + L - a I + diag(d)) x = r`` for slowly varying ``d >= 0``.

    Conjugate gradients preconditioned by the explicit inverse of the matrix at a
    reference shift ``d_ref``; the inverse is rebuilt when ``d`` drifts from
    ``d_ref`` by more than ``drift`` times the smallest diagonal entry.
    """

    def __init__(self, op: DiscreteOperator, shift: float, drift: float = 0.02):
        self.op = op
        self.shift = shift
        self.base = op.matrix + shift * np.eye(op.n)
        self.diag0 = float(np.min(np.diag(self.base)))
        self.drift = drift
        self.d_ref = None
        self.G = None
        self.refactors = 0

    def _matvec(self, d, x):
        return self.op.fast_matvec(x) + (self.shift + d) * x

    def _precond(self, d):
        if self.d_ref is None or np.max(np.abs(d - self.d_ref)) > self.drift * self.diag0:
            self.d_ref = d.copy()
            cho = sla.cho_factor(self.base + np.diag(d), check_finite=False)
            self.G = sla.cho_solve(cho, np.eye(self.op.n), check_finite=False)
            self.refactors += 1

    def solve(self, d, r, x0=None, tol=1e-13, maxiter=500):
        self._precond(d)
        x = self.G @ r if x0 is None else x0.copy()
        res = r - self._matvec(d, x)
        rnorm = np.linalg.norm(r, np.inf) or 1.0
        if np.linalg.norm(res, np.inf) <= tol * rnorm:
            return x
        z = self.G @ res
        p = z.copy()
        rz = res @ z
        for _ in range(maxiter):
            q = self._matvec(d, p)
            step = rz / (p @ q)
            x += step * p
            res -= step * q
            if np.linalg.norm(res, np.inf) <= tol * rnorm:
                return x
            z = self.G @ res
            rz_new = res @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise NumericalError("preconditioned CG stalled in time step", float(np.linalg.norm(res, np.inf)))


def _step_grid(T: float, dt: float) -> np.ndarray:
    """Step end times; the last step is shortened when ``T/dt`` is not integral."""
    k = int(math.floor(T / dt + 1e-9))
    ts = dt * np.arange(1, k + 1)
    if T - (ts[-1] if k else 0.0) > 1e-9 * dt:
        ts = np.append(ts, T)
    else:
        if k:
            ts[-1] = T
    return ts


def _check_run(op, phi, T, dt, a):
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (op.n,):
        raise ValidationError("initial datum does not match the grid", "dimension")
    if np.any(phi < 0) or not np.all(np.isfinite(phi)):
        raise ValidationError("initial datum must be finite and nonnegative", "H2")
    if not dt > 0 or not T > 0:
        raise ValidationError("T and dt must be positive", "parameter")
    if dt * a >= 1:
        raise ValidationError(f"dt*a must be < 1 (got {dt * a})", "parameter")
    return phi.copy()


class _Recorder:
    def __init__(self, op, phi, a, T, snapshot_every, obstacle):
        self.op = op
        self.h = op.h
        self.a = a
        self.phi_sup = float(np.max(phi))
        every = snapshot_every if snapshot_every else T
        self.snap_targets = list(np.round(np.arange(0.0, T + 1e-12, every), 12))
        if abs(self.snap_targets[-1] - T) > 1e-12:
            self.snap_targets.append(T)
        self.times, self.snaps = [0.0], [phi.copy()]
        self.next_snap = 1
        self.step_times, self.sup, self.mins, self.energy, self.dvdt, self.slack = [], [], [], [], [], []
        self.comp = [] if obstacle else None
        self.mults = [np.zeros(op.n)] if obstacle else None
        self._record(0.0, phi, np.zeros(op.n), 0.0, None)

    def _record(self, t, v, dv, comp, mu):
        sup = float(np.max(v))
        self.step_times.append(t)
        self.sup.append(sup)
        self.mins.append(float(np.min(v)))
        self.energy.append(float(self.h * (v @ self.op.fast_matvec(v))))
        self.dvdt.append(float(np.sqrt(self.h * (dv @ dv))))
        bound = math.exp(self.a * t) * self.phi_sup
        self.slack.append(bound - sup)
        if self.comp is not None:
            self.comp.append(comp)
        if sup > bound + 1e-10:
            raise NumericalError(f"exponential bound violated at t={t}", sup - bound)

    def step(self, t, v, v_old, dt, comp=0.0, mu=None):
        self._record(t, v, (v - v_old) / dt, comp, mu)
        while self.next_snap < len(self.snap_targets) and t >= self.snap_targets[self.next_snap] - 1e-9 * max(1.0, t):
            self.times.append(float(self.snap_targets[self.next_snap]))
            self.snaps.append(v.copy())
            if self.mults is not None:
                self.mults.append(np.zeros(self.op.n) if mu is None else mu.copy())
            self.next_snap += 1

    def trajectory(self, halvings) -> Trajectory:
        return Trajectory(
            times=np.array(self.times),
            snapshots=np.array(self.snaps),
            step_times=np.array(self.step_times),
            sup_norm=np.array(self.sup),
            min_value=np.array(self.mins),
            energy=np.array(self.energy),
            dvdt_norm=np.array(self.dvdt),
            bound_slack=np.array(self.slack),
            comp_residual=None if self.comp is None else np.array(self.comp),
            multipliers=None if self.mults is None else np.array(self.mults),
            phi_sup=self.phi_sup,
            a=self.a,
            halvings=halvings,
        )


def evolve_logistic(
    problem: ProblemSpec,
    op: DiscreteOperator,
    a: float,
    p: float,
    phi,
    T: float,
    dt: float = 1e-3,
    b=None,
    snapshot_every: float = SNAPSHOT_EVERY,
) -> Trajectory:
    """Integrate ``dv/dt + L v = a v - b v^p`` from ``phi`` up to time ``T``.

    ``b`` overrides the problem's absorption field (used for runs outside (H1)).
    """
    v = _check_run(op, phi, T, dt, a)
    b = b_field(op.grid, problem) if b is None else np.asarray(b, dtype=float)
    solvers: dict[float, _ShiftedSolver] = {}

    def solver(step):
        if step not in solvers:
            solvers[step] = _ShiftedSolver(op, 1.0 / step - a)
        return solvers[step]

    rec = _Recorder(op, v, a, T, snapshot_every, obstacle=False)
    halvings = 0
    t_prev = 0.0
    for t in _step_grid(T, dt):
        step = t - t_prev
        for level in range(MAX_HALVINGS + 1):
            sub = step / 2**level
            w = v
            ok = True
            for _ in range(2**level):
                d = b * w ** (p - 1) if p != 1 else b.copy()
                w_new = solver(sub).solve(d, w / sub, x0=w)
                if np.min(w_new) < -1e-13 * max(1.0, float(np.max(np.abs(w_new)))):
                    ok = False
                    break
                w = np.maximum(w_new, 0.0)
            if ok:
                break
            halvings += 1
        else:
            raise NumericalError(f"positivity lost at t={t} after {MAX_HALVINGS} halvings", float(np.min(w_new)))
        rec.step(t, w, v, step)
        v = w
        t_prev = t
    return rec.trajectory(halvings)


def parse_mode(mode) -> tuple[str, float]:
    """``'complementarity'`` or ``'penalization:<n>'`` / ``('penalization', n)``."""
    if isinstance(mode, tuple):
        kind, n = mode
        return kind, float(n)
    if mode == "complementarity":
        return "complementarity", 0.0
    if isinstance(mode, str) and mode.startswith("penalization"):
        _, _, n = mode.partition(":")
        try:
            return "penalization", float(n) if n else 1e3
        except ValueError:
            pass
    raise ValidationError(f"unknown obstacle mode {mode!r}", "usage")


def evolve_obstacle(
    problem: ProblemSpec,
    op: DiscreteOperator,
    a: float,
    phi,
    T: float,
    dt: float = 1e-3,
    mode="complementarity",
    snapshot_every: float = SNAPSHOT_EVERY,
    psi=None,
) -> Trajectory:
    """Integrate the parabolic obstacle problem ``max{dv/dt + L v - a v, v - psi} = 0``.

    In complementarity mode every step solves an LCP with the SPD matrix
    ``I/dt + L - a I``; in penalization mode the constraint is replaced by the
    penalty ``n (v - psi)^+`` (implicit, solved by an active set Newton loop).
    """
    kind, pen = parse_mode(mode)
    v = _check_run(op, phi, T, dt, a)
    psi = obstacle_vector(op.grid, problem) if psi is None else np.asarray(psi, dtype=float)
    finite = np.isfinite(psi)
    if np.any(v[finite] > psi[finite]):
        raise ValidationError("initial datum exceeds the obstacle", "H2")
    psi_f = np.where(finite, psi, 0.0)
    eye = np.eye(op.n)

    lcp_solvers: dict[float, ActiveSetSolver] = {}
    pen_caches: dict[float, FactorCache] = {}

    def step_matrix(step):
        return eye / step + op.matrix - a * eye

    rec = _Recorder(op, v, a, T, snapshot_every, obstacle=True)
    active = np.zeros(op.n, dtype=bool)
    t_prev = 0.0
    for t in _step_grid(T, dt):
        step = t - t_prev
        r = v / step
        if kind == "complementarity":
            if step not in lcp_solvers:
                lcp_solvers[step] = ActiveSetSolver(
                    step_matrix(step), matvec=lambda x, c=1.0 / step - a: op.fast_matvec(x) + c * x
                )
            res = lcp_solvers[step].solve(r, psi, active)
            w, mu, active = np.minimum(res.x, psi), res.mu, res.active
            comp = res.comp_residual
            if comp > 1e-8 or np.any(mu < -1e-12):
                raise NumericalError(f"step LCP failed at t={t}", comp)
        else:
            if step not in pen_caches:
                A = step_matrix(step)
                pen_caches[step] = FactorCache(
                    lambda chi, A=A: sla.cho_factor(A + pen * np.diag(chi.astype(float)), check_finite=False)
                )
            cache = pen_caches[step]
            chi = active
            for _ in range(200):
                w = sla.cho_solve(cache.get(chi), r + pen * chi * psi_f, check_finite=False)
                new_chi = finite & (w > psi_f)
                if np.array_equal(new_chi, chi):
                    break
                chi = new_chi
            else:
                raise NumericalError(f"penalty active set did not settle at t={t}", np.nan)
            active = chi
            mu = pen * np.maximum(w - psi_f, 0.0) * finite
            comp = complementarity_residual(w, mu, psi)
            if np.min(w) < 0:
                raise NumericalError(f"positivity lost at t={t}", float(np.min(w)))
        rec.step(t, w, v, step, comp, mu)
        v = w
        t_prev = t
    return rec.trajectory(0)
