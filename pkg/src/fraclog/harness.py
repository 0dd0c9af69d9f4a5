"""Asymptotic experiments: p -> infinity, t -> infinity, and the two iterated limits.

Distances are the sup norm and the discrete energy seminorm ``sqrt(h <L w, w>)``
of the difference ``w``, which stands in for the H^alpha distance.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    FraclogError,
    NumericalError,
    ProblemSpec,
    ValidationError,
    build_grid,
    fmt,
    phi_field,
)
from .elliptic import Status, lambda_d0, solve_logistic, solve_obstacle_elliptic
from .fracop import DiscreteOperator, assemble_operator
from .parabolic import evolve_logistic, evolve_obstacle
from .spectral import principal_eigen
from .stable_mc import workers

P_MAX = 128
DELTA = 0.1
TAIL_FROM = 5.0
# distances below this are round-off of a fixed point
ZERO_FLOOR = 1e-12


def _same_grid(u, v) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ValidationError(f"fields live on different grids: {u.shape} vs {v.shape}", "dimension")
    return u, v


def sup_distance(u, v) -> float:
    u, v = _same_grid(u, v)
    return float(np.max(np.abs(u - v)))


def energy_distance(op: DiscreteOperator, u, v) -> float:
    u, v = _same_grid(u, v)
    if u.shape != (op.n,):
        raise ValidationError(f"fields of size {u.size} do not match the operator size {op.n}", "dimension")
    w = u - v
    # the form is positive definite; clip the round-off of tiny differences
    return float(np.sqrt(max(op.h * (w @ op.fast_matvec(w)), 0.0)))


@dataclass
class ExperimentReport:
    axis_name: str
    axis: list
    sup_distance: list
    energy_distance: list
    monotone: list
    reference: dict
    params: dict
    wall_times: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def violations(self) -> list:
        """Axis values at which a distance failed to be non-increasing."""
        return [x for x, ok in zip(self.axis, self.monotone) if not ok]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["axis_value", "sup_distance", "energy_distance", "monotone_flag"])
        for x, s, e, m in zip(self.axis, self.sup_distance, self.energy_distance, self.monotone):
            w.writerow([fmt(x), fmt(s), fmt(e), int(m)])
        return buf.getvalue()

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "axis_name": self.axis_name,
            "axis": list(self.axis),
            "sup_distance": list(self.sup_distance),
            "energy_distance": list(self.energy_distance),
            "monotone": list(self.monotone),
            "violations": self.violations,
            "reference": self.reference,
            "params": self.params,
            "extra": self.extra,
        }
        if include_timing:
            out["wall_times"] = list(self.wall_times)
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"


def _check_axis(values, name: str) -> list:
    values = [float(v) for v in values]
    if not values:
        raise ValidationError(f"{name} is empty", "parameter")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValidationError(f"{name} must be strictly increasing", "parameter")
    return values


def _non_increasing(*columns) -> list:
    flags = [True]
    for i in range(1, len(columns[0])):
        flags.append(all(c[i] <= c[i - 1] for c in columns))
    return flags


def _fan_out(fn, items):
    """Map ``fn`` over ``items`` on a thread pool; results come back in input order."""
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def _attach(exc: FraclogError, **where):
    tag = ", ".join(f"{k}={v:g}" for k, v in where.items())
    if isinstance(exc, NumericalError):
        err = NumericalError(f"{tag}: {exc}", exc.residual, **exc.diagnostics, **where)
    else:
        err = ValidationError(f"{tag}: {exc}", getattr(exc, "hypothesis", "config"))
    return err


def _setup(problem: ProblemSpec, n: int):
    grid = build_grid(problem, n)
    return grid, assemble_operator(grid, problem.alpha)


def run_p_limit(
    problem: ProblemSpec,
    mode: str,
    p_list,
    n: int = 1024,
    dt: float = 1e-3,
    T: float = 1.0,
    delta: float = DELTA,
) -> ExperimentReport:
    """Distances from the logistic solutions at each ``p`` to the obstacle reference.

    Elliptic mode compares steady states. Parabolic mode compares trajectories
    from the problem's initial datum at the snapshot times (spacing 0.1) in
    ``[delta, T]``; the energy column is the time integral over ``[0, T]``.
    """
    if mode not in ("elliptic", "parabolic"):
        raise ValidationError(f"p-limit mode must be 'elliptic' or 'parabolic', got {mode!r}", "usage")
    ps = _check_axis(p_list, "p_list")
    if ps[0] <= 1 or ps[-1] > P_MAX:
        raise ValidationError(f"p values must lie in (1, {P_MAX}]", "parameter")
    grid, op = _setup(problem, n)
    a = problem.a
    params = {"mode": mode, "n": n, "dt": dt, "T": T, "delta": delta, "p_list": ps, "config": problem.to_config()}

    if mode == "elliptic":
        ref, t_ref = _timed(solve_obstacle_elliptic, problem, op)
        reference = {"kind": "solve_obstacle_elliptic", "comp_residual": ref.comp_residual, "eq_residual": ref.eq_residual}

        def point(p):
            try:
                rep, secs = _timed(solve_logistic, problem, op, a=a, p=p)
            except FraclogError as exc:
                raise _attach(exc, p=p) from exc
            if rep.status is not Status.CONVERGED:
                raise NumericalError(f"p={p:g}: logistic solve ended with {rep.status.value}", rep.residual, p=p)
            return sup_distance(rep.u, ref.u), energy_distance(op, rep.u, ref.u), secs

    else:
        phi = phi_field(grid, problem)
        ref, t_ref = _timed(evolve_obstacle, problem, op, a, phi, T, dt)
        times = ref.times
        use = times >= delta - 1e-12
        reference = {"kind": "evolve_obstacle", "mode": "complementarity", "max_comp_residual": float(np.max(ref.comp_residual))}

        def point(p):
            try:
                tr, secs = _timed(evolve_logistic, problem, op, a, p, phi, T, dt)
            except FraclogError as exc:
                raise _attach(exc, p=p) from exc
            sups = np.max(np.abs(tr.snapshots - ref.snapshots), axis=1)
            ens = np.array([energy_distance(op, x, y) for x, y in zip(tr.snapshots, ref.snapshots)])
            return float(np.max(sups[use])), float(np.trapezoid(ens, times)), secs

    rows = _fan_out(point, ps)
    sups = [r[0] for r in rows]
    ens = [r[1] for r in rows]
    return ExperimentReport(
        axis_name="p",
        axis=ps,
        sup_distance=sups,
        energy_distance=ens,
        monotone=_non_increasing(sups, ens),
        reference=reference,
        params=params,
        wall_times=[t_ref] + [r[2] for r in rows],
    )


def parse_t_mode(mode) -> tuple[str, float | None]:
    """``'obstacle'``, ``'logistic'`` (problem's p) or ``'logistic:<p>'``."""
    if mode == "obstacle":
        return "obstacle", None
    if isinstance(mode, str) and mode.startswith("logistic"):
        _, _, p = mode.partition(":")
        try:
            return "logistic", float(p) if p else None
        except ValueError:
            pass
    raise ValidationError(f"unknown t-limit mode {mode!r}", "usage")


def _decay_rate(ts, ds) -> float:
    ts, ds = np.asarray(ts), np.asarray(ds)
    keep = ds > 0
    if keep.sum() < 2:
        return float("nan")
    return float(-np.polyfit(ts[keep], np.log(ds[keep]), 1)[0])


def run_t_limit(
    problem: ProblemSpec,
    mode,
    t_list,
    n: int = 1024,
    dt: float = 1e-3,
    phi=None,
    tail_from: float = TAIL_FROM,
) -> ExperimentReport:
    """Distances from the evolution at the listed times to its steady state.

    The steady state is computed first; the evolution then runs segment by
    segment between consecutive listed times. ``extra['tail_decreasing']`` checks
    strict decrease for ``t >= tail_from`` and ``extra['rate']`` is the slope of
    an exponential fit over that tail.
    """
    kind, p = parse_t_mode(mode)
    ts = _check_axis(t_list, "t_list")
    if ts[0] <= 0:
        raise ValidationError("times must be positive", "parameter")
    grid, op = _setup(problem, n)
    a = problem.a
    v = phi_field(grid, problem) if phi is None else np.asarray(phi, dtype=float)
    t0 = time.perf_counter()
    if kind == "logistic":
        p = problem.p if p is None else p
        rep = solve_logistic(problem, op, p=p)
        if rep.status is not Status.CONVERGED:
            raise NumericalError(f"steady state: {rep.status.value}", rep.residual)
        u = rep.u
        reference = {"kind": "solve_logistic", "p": p, "residual": rep.residual}

        def advance(v, span):
            return evolve_logistic(problem, op, a, p, v, span, dt, snapshot_every=None).final

    else:
        rep = solve_obstacle_elliptic(problem, op)
        u = rep.u
        reference = {"kind": "solve_obstacle_elliptic", "comp_residual": rep.comp_residual}

        def advance(v, span):
            return evolve_obstacle(problem, op, a, v, span, dt, snapshot_every=None).final

    walls = [time.perf_counter() - t0]
    sups, ens = [], []
    t_prev = 0.0
    for t in ts:
        t1 = time.perf_counter()
        v = advance(v, t - t_prev)
        t_prev = t
        s, e = sup_distance(v, u), energy_distance(op, v, u)
        sups.append(0.0 if s < ZERO_FLOOR else s)
        ens.append(0.0 if s < ZERO_FLOOR else e)
        walls.append(time.perf_counter() - t1)

    monotone = _non_increasing(sups, ens)
    tail = [i for i, t in enumerate(ts) if t >= tail_from]
    tail_ok = all(sups[j] < sups[i] or sups[i] == 0.0 for i, j in zip(tail, tail[1:]))
    return ExperimentReport(
        axis_name="t",
        axis=ts,
        sup_distance=sups,
        energy_distance=ens,
        monotone=monotone,
        reference=reference,
        params={"mode": kind, "p": p, "n": n, "dt": dt, "tail_from": tail_from, "t_list": ts,
                "config": problem.to_config(), "custom_phi": phi is not None},
        wall_times=walls,
        extra={
            "tail_decreasing": bool(tail_ok),
            "rate": _decay_rate([ts[i] for i in tail], [sups[i] for i in tail]),
        },
    )


@dataclass
class CommuteReport:
    field_i: np.ndarray = field(repr=False)
    field_ii: np.ndarray = field(repr=False)
    distance: float
    raw_distance: float
    evolution_check: float
    obstacle_distance_i: float
    p_max: float
    T_max: float
    window: tuple
    params: dict

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "raw_distance": self.raw_distance,
            "evolution_check": self.evolution_check,
            "obstacle_distance_i": self.obstacle_distance_i,
            "p_max": self.p_max,
            "T_max": self.T_max,
            "window": list(self.window),
            "params": self.params,
            "field_i": self.field_i.tolist(),
            "field_ii": self.field_ii.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def check_window(problem: ProblemSpec, op: DiscreteOperator) -> tuple[float, float]:
    lam_d = principal_eigen(op).lam
    lam_0 = lambda_d0(problem, op)
    if not lam_d < problem.a < lam_0:
        raise ValidationError(
            f"a={problem.a:g} outside the existence window: lambda_1^D={lam_d:.6g}, lambda_1^D0={lam_0:.6g}",
            "window",
        )
    return lam_d, lam_0


def commuting_limits(
    problem: ProblemSpec,
    p_max: float = 64.0,
    T_max: float = 20.0,
    n: int = 1024,
    dt: float = 1e-3,
) -> CommuteReport:
    """Terminal fields of the two iterated limits and their sup distance.

    Path (i): p -> infinity first is the obstacle evolution, run to ``T_max``.
    Path (ii): the steady state ``u_{p_max}`` (cross-checked against the
    logistic evolution at ``T_max``), then p -> infinity by Richardson
    extrapolation ``2 u_{p_max} - u_{p_max/2}`` of the O(1/p) approach.
    ``raw_distance`` uses ``u_{p_max}`` itself.
    """
    if not 2 <= p_max <= P_MAX:
        raise ValidationError(f"p_max must lie in [2, {P_MAX}]", "parameter")
    grid, op = _setup(problem, n)
    win = check_window(problem, op)
    a = problem.a
    phi = phi_field(grid, problem)

    def path_i(_):
        return evolve_obstacle(problem, op, a, phi, T_max, dt, snapshot_every=None).final

    def steady(p):
        rep = solve_logistic(problem, op, p=p)
        if rep.status is not Status.CONVERGED:
            raise NumericalError(f"p={p:g}: logistic solve ended with {rep.status.value}", rep.residual, p=p)
        return rep.u

    def evolution(_):
        return evolve_logistic(problem, op, a, p_max, phi, T_max, dt, snapshot_every=None).final

    tasks = [lambda: path_i(None), lambda: steady(p_max), lambda: steady(p_max / 2), lambda: evolution(None)]
    v_i, u_p, u_half, v_p = _fan_out(lambda f: f(), tasks)
    u_obs = solve_obstacle_elliptic(problem, op).u
    field_ii = 2.0 * u_p - u_half
    return CommuteReport(
        field_i=v_i,
        field_ii=field_ii,
        distance=sup_distance(v_i, field_ii),
        raw_distance=sup_distance(v_i, u_p),
        evolution_check=sup_distance(v_p, u_p),
        obstacle_distance_i=sup_distance(v_i, u_obs),
        p_max=float(p_max),
        T_max=float(T_max),
        window=win,
        params={"n": n, "dt": dt, "config": problem.to_config()},
    )
