"""Command-line entry point: ``python -m fraclog <command> --config PATH [options]``.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical error.
Data goes to files under ``--out`` and a summary to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import FraclogError, NumericalError, ValidationError, build_grid, fmt, load_config, phi_field
from .elliptic import solve_logistic, solve_obstacle_elliptic
from .fracop import assemble_operator, green_solve
from .harness import commuting_limits, run_p_limit, run_t_limit
from .parabolic import evolve_logistic, evolve_obstacle, parse_mode
from .spectral import PotentialSchedule, eigen_cutoff_experiment, principal_eigen, window
from .stable_mc import exit_time_functional, survival_eigenvalue

COMMANDS = (
    "validate",
    "eigen",
    "cutoff",
    "solve-elliptic",
    "solve-obstacle",
    "evolve",
    "evolve-obstacle",
    "mc-check",
    "p-limit",
    "t-limit",
    "commute",
)
DEFAULT_MODES = {
    "evolve-obstacle": "complementarity",
    "mc-check": "exit",
    "p-limit": "elliptic",
    "t-limit": "logistic",
}
CUTOFF_KS = (0.0, 10.0, 100.0, 1000.0, 10000.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    outputs: list
    version: str = __version__
    options: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return _json(self.__dict__)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (str, int, np.integer)) else fmt(v) for v in row])
    return buf.getvalue()


def _field_csv(x, **columns) -> str:
    names = list(columns)
    return _csv(["x"] + names, zip(x, *(columns[k] for k in names)))


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name} must be a comma-separated list of numbers") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fraclog", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="problem configuration (JSON)")
    parser.add_argument("--n", type=int, default=1024, help="interior grid nodes")
    parser.add_argument("--dt", type=float, default=1e-3, help="time step (or MC step)")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", default=None, help="output directory (default ./runs/<command>)")
    parser.add_argument("--mode", default=None, help="command-specific mode")
    parser.add_argument("--T", type=float, default=None, help="final time")
    parser.add_argument("--paths", type=int, default=100_000, help="Monte Carlo paths")
    parser.add_argument("--x0", type=float, default=None, help="MC start point (default: domain midpoint)")
    parser.add_argument("--p-list", default="2,4,8,16,32,64")
    parser.add_argument("--t-list", default="1,2,5,10,20")
    parser.add_argument("--p-max", type=float, default=64.0)
    return parser


def _check_modes(args) -> None:
    mode = args.mode or DEFAULT_MODES.get(args.command)
    cmd = args.command
    if cmd == "evolve-obstacle":
        parse_mode(mode)
    elif cmd == "mc-check" and mode not in ("exit", "survival"):
        raise UsageError("mc-check mode must be 'exit' or 'survival'")
    elif cmd == "p-limit" and mode not in ("elliptic", "parabolic"):
        raise UsageError("p-limit mode must be 'elliptic' or 'parabolic'")
    elif cmd == "t-limit" and not (mode == "obstacle" or mode.startswith("logistic")):
        raise UsageError("t-limit mode must be 'obstacle', 'logistic' or 'logistic:<p>'")
    elif cmd not in DEFAULT_MODES and args.mode is not None:
        raise UsageError(f"{cmd} takes no --mode")
    args.mode = mode
    if args.n < 3:
        raise UsageError("--n must be at least 3")
    if not args.dt > 0:
        raise UsageError("--dt must be positive")
    if args.T is not None and not args.T > 0:
        raise UsageError("--T must be positive")
    if args.paths < 2:
        raise UsageError("--paths must be at least 2")
    args.p_values = _floats(args.p_list, "--p-list")
    args.t_values = _floats(args.t_list, "--t-list")


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def run_command(args, problem) -> tuple[dict[str, str], str]:
    """Compute one command; returns ({filename: text}, stdout summary)."""
    cmd = args.command
    if cmd == "validate":
        text = _json(problem.to_config())
        return {"resolved.json": text}, text

    grid = build_grid(problem, args.n)
    op = assemble_operator(grid, problem.alpha)
    x = grid.nodes
    phi = phi_field(grid, problem)

    if cmd == "eigen":
        pair = principal_eigen(op)
        lam_d, lam_0 = window(problem, args.n)
        text = _csv(["n", "lambda", "lambda_d0", "iterations", "residual"],
                    [(args.n, pair.lam, lam_0, pair.iterations, pair.residual)])
        return {"eigen.csv": text, "eigenfunction.csv": _field_csv(x, psi=pair.psi)}, text

    if cmd == "cutoff":
        sched = PotentialSchedule.indicator(grid, problem, CUTOFF_KS)
        rep = eigen_cutoff_experiment(problem, sched, grid)
        text = rep.to_csv()
        summary = {"lambda_target": rep.lam_target, "strictly_increasing": rep.strictly_increasing()}
        return {"cutoff.csv": text, "cutoff.json": _json(summary)}, text

    if cmd == "solve-elliptic":
        rep = solve_logistic(problem, op, check_uniqueness=True)
        data = rep.to_dict()
        data.pop("u")
        data["upward_iterations"] = rep.upward_iterations
        return {"steady.json": _json(data), "steady.csv": _field_csv(x, u=rep.u)}, _json(data)

    if cmd == "solve-obstacle":
        rep = solve_obstacle_elliptic(problem, op)
        data = rep.to_dict()
        data.pop("u")
        data.pop("mu")
        return {"obstacle.json": _json(data), "obstacle.csv": _field_csv(x, u=rep.u, mu=rep.mu)}, _json(data)

    if cmd in ("evolve", "evolve-obstacle"):
        T = args.T if args.T is not None else 1.0
        if cmd == "evolve":
            tr = evolve_logistic(problem, op, problem.a, problem.p, phi, T, args.dt)
        else:
            tr = evolve_obstacle(problem, op, problem.a, phi, T, args.dt, mode=args.mode)
        snaps = {f"t={fmt(t)}": s for t, s in zip(tr.times, tr.snapshots)}
        summary = {
            "T": T,
            "final_sup": float(np.max(tr.final)),
            "min_value": float(np.min(tr.min_value)),
            "halvings": tr.halvings,
            "max_comp_residual": None if tr.comp_residual is None else float(np.max(tr.comp_residual)),
            "snapshot_times": [float(t) for t in tr.times],
        }
        return {
            "trajectory.csv": tr.to_csv(),
            "snapshots.csv": _field_csv(x, **snaps),
            "summary.json": _json(summary),
        }, _json(summary)

    if cmd == "mc-check":
        x0 = args.x0 if args.x0 is not None else 0.5 * (problem.domain[0] + problem.domain[1])
        if args.mode == "exit":
            est = exit_time_functional(problem, x0, None, args.paths, args.dt, args.seed)
            torsion = green_solve(op, np.ones(op.n))
            ref = float(np.interp(x0, np.r_[problem.domain[0], x, problem.domain[1]], np.r_[0.0, torsion, 0.0]))
            extra = {"green_solve_at_x0": ref, "abs_diff": abs(est.mean - ref)}
        else:
            T = args.T if args.T is not None else 3.0
            est = survival_eigenvalue(problem, x0, (T / 3, T), args.paths, args.dt, args.seed)
            lam = principal_eigen(op).lam
            extra = {"lambda_1": lam, "rel_diff": abs(est.mean - lam) / lam}
        data = json.loads(est.to_json())
        data["check"] = extra
        data["mode"] = args.mode
        return {"mc.json": _json(data)}, _json(data)

    if cmd == "p-limit":
        T = args.T if args.T is not None else 1.0
        rep = run_p_limit(problem, args.mode, args.p_values, args.n, args.dt, T=T)
        _log(f"wall times (s): {[round(t, 3) for t in rep.wall_times]}")
        return {"p_limit.csv": rep.to_csv(), "p_limit.json": rep.to_json()}, rep.to_csv()

    if cmd == "t-limit":
        rep = run_t_limit(problem, args.mode, args.t_values, args.n, args.dt)
        _log(f"wall times (s): {[round(t, 3) for t in rep.wall_times]}")
        return {"t_limit.csv": rep.to_csv(), "t_limit.json": rep.to_json()}, rep.to_csv()

    if cmd == "commute":
        T = args.T if args.T is not None else 20.0
        rep = commuting_limits(problem, args.p_max, T, args.n, args.dt)
        data = rep.to_dict()
        fields = _field_csv(x, path_i=data.pop("field_i"), path_ii=data.pop("field_ii"))
        return {"commute.json": _json(data), "commute_fields.csv": fields}, _json(data)

    raise UsageError(f"unknown command {cmd}")


def dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_modes(args)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return 1
    except ValidationError as exc:
        _log(f"usage error: {exc}")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    try:
        problem = load_config(args.config)
    except OSError as exc:
        _log(f"cannot read config: {exc}")
        return 1
    except ValidationError as exc:
        _log(f"validation error: {exc}")
        return 2

    t0 = time.perf_counter()
    try:
        outputs, summary = run_command(args, problem)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return 1
    except ValidationError as exc:
        _log(f"validation error: {exc}")
        return 1 if exc.hypothesis == "usage" else 2
    except NumericalError as exc:
        _log(f"numerical error: {exc}")
        return 3
    except FraclogError as exc:
        _log(f"numerical error: {exc}")
        return 3
    _log(f"{args.command}: {time.perf_counter() - t0:.2f} s")

    out = Path(args.out) if args.out else Path("runs") / args.command
    out.mkdir(parents=True, exist_ok=True)
    options = {k: getattr(args, k) for k in ("n", "dt", "mode", "T", "paths", "x0", "p_list", "t_list", "p_max")}
    manifest = RunManifest(args.command, problem.to_config(), args.seed, sorted(outputs), options=options)
    outputs["manifest.json"] = manifest.to_json()
    for name, text in outputs.items():
        with open(out / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    sys.stdout.write(summary)
    return 0


def main() -> None:
    sys.exit(dispatch())
