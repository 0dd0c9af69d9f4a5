"""Monte Carlo oracle: symmetric stable process killed on leaving the domain.

The generator of the killed process is ``-L`` with ``L = (-Delta)^alpha``, i.e.
the process has stability index ``s = 2 alpha`` and characteristic function
``exp(-t |xi|^(2 alpha))``.

Paths are simulated in blocks; block ``j`` draws from its own Philox stream
spawned from ``SeedSequence(seed)``, so results do not depend on how blocks are
scheduled across workers.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import FraclogError, Profile, ProblemSpec, ValidationError

BLOCK_SIZE = 10_000


class InsufficientPathsError(FraclogError, RuntimeError):
    """Too few surviving paths to fit a decay rate."""


@dataclass
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    dt: float
    seed: int
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def workers() -> int:
    raw = os.environ.get("FRACLOG_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def block_generators(seed: int, n_blocks: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def standard_stable(s: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Standard symmetric s-stable variates, characteristic function ``exp(-|xi|^s)``.

    Chambers-Mallows-Stuck transform of a uniform angle and a unit exponential;
    Cauchy at ``s == 1``.
    """
    if not 0.0 < s <= 2.0:
        raise ValidationError(f"stability index must lie in (0,2], got {s}", "parameter")
    if s == 1.0:
        return rng.standard_cauchy(size)
    V = rng.uniform(-math.pi / 2, math.pi / 2, size)
    W = rng.standard_exponential(size)
    return np.sin(s * V) / np.cos(V) ** (1.0 / s) * (np.cos((1.0 - s) * V) / W) ** ((1.0 - s) / s)


def sample_stable_increment(alpha: float, dt: float, rng: np.random.Generator, size=None):
    """Increment of the process over a step ``dt``: ``dt^(1/(2 alpha)) * S``."""
    if not dt > 0:
        raise ValidationError("dt must be positive", "parameter")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0,1), got {alpha}", "parameter")
    s = 2.0 * alpha
    return dt ** (1.0 / s) * standard_stable(s, rng, size)


def _map_blocks(fn, gens):
    n = min(workers(), len(gens))
    if n <= 1:
        return [fn(j, g) for j, g in enumerate(gens)]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, range(len(gens)), gens))


def _blocks(n_paths: int, block_size: int) -> list[int]:
    full, rest = divmod(n_paths, block_size)
    return [block_size] * full + ([rest] if rest else [])


def _check_start(problem: ProblemSpec, x0: float):
    xl, xr = problem.domain
    if not xl < x0 < xr:
        raise ValidationError(f"x0={x0} is not inside the domain ({xl}, {xr})", "domain")


def exit_time_functional(
    problem: ProblemSpec,
    x0: float,
    f: Profile | None,
    n_paths: int,
    dt: float,
    seed: int,
    block_size: int = BLOCK_SIZE,
) -> McEstimate:
    """Estimate ``E_x0 int_0^tau f(X_t) dt`` with a left Riemann sum along each path.

    A path is stopped at the first grid time at which it lies outside the domain.
    ``f=None`` means ``f == 1`` (expected exit time).
    """
    _check_start(problem, x0)
    xl, xr = problem.domain
    alpha = problem.alpha
    sizes = _blocks(n_paths, block_size)

    def run(j, rng):
        m = sizes[j]
        pos = np.full(m, float(x0))
        ids = np.arange(m)
        acc = np.zeros(m)
        while pos.size:
            if f is None:
                acc[ids] += dt
            else:
                acc[ids] += dt * f(pos, problem.d0)
            pos = pos + sample_stable_increment(alpha, dt, rng, pos.size)
            inside = (pos > xl) & (pos < xr)
            pos = pos[inside]
            ids = ids[inside]
        return acc

    values = np.concatenate(_map_blocks(run, block_generators(seed, len(sizes))))
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return McEstimate(mean, se, n_paths, dt, seed, {"x0": x0, "f": None if f is None else f.to_dict()})


def survival_eigenvalue(
    problem: ProblemSpec,
    x0: float,
    window: tuple[float, float],
    n_paths: int,
    dt: float,
    seed: int,
    block_size: int = BLOCK_SIZE,
    n_fit: int = 21,
    n_boot: int = 200,
    min_survivors: int = 100,
) -> McEstimate:
    """Decay rate of the survival probability ``P_x0(tau > t)`` over ``window``.

    The rate is the least-squares slope of ``-log S(t)`` on ``n_fit`` equally
    spaced times; its standard error comes from a bootstrap over path blocks.
    ``extra['pre_asymptotic']`` flags windows that open before one decay time
    (``rate * t1 < 1``), where higher modes still shape ``S``; the drift between
    first- and second-half slopes is reported in standard errors as ``drift_z``.
    """
    _check_start(problem, x0)
    t1, t2 = window
    if not 0 <= t1 < t2:
        raise ValidationError("window must satisfy 0 <= t1 < t2", "parameter")
    xl, xr = problem.domain
    alpha = problem.alpha
    fit_times = np.linspace(t1, t2, n_fit)
    fit_steps = np.rint(fit_times / dt).astype(int)
    last = int(fit_steps[-1])
    sizes = _blocks(n_paths, block_size)

    def run(j, rng):
        pos = np.full(sizes[j], float(x0))
        counts = np.zeros(n_fit, dtype=np.int64)
        k_next = 0
        for step in range(1, last + 1):
            if not pos.size:
                break
            pos = pos + sample_stable_increment(alpha, dt, rng, pos.size)
            pos = pos[(pos > xl) & (pos < xr)]
            while k_next < n_fit and fit_steps[k_next] == step:
                counts[k_next] = pos.size
                k_next += 1
        if fit_steps[0] == 0:
            counts[0] = sizes[j]
        return counts

    counts = np.array(_map_blocks(run, block_generators(seed, len(sizes))))
    total = counts.sum(axis=0)
    if total[-1] < min_survivors:
        raise InsufficientPathsError(f"only {int(total[-1])} survivors at t={t2}; need {min_survivors}")
    t_fit = fit_steps * dt

    def slope(c, idx=slice(None)):
        # normalizing S(t) by the path count only shifts the intercept
        return -np.polyfit(t_fit[idx], np.log(c[idx]), 1)[0]

    rate = float(slope(total.astype(float)))
    boot_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1])))
    nb = counts.shape[0]
    boot = []
    for _ in range(n_boot):
        pick = boot_rng.integers(0, nb, nb)
        c = counts[pick].sum(axis=0).astype(float)
        if np.all(c > 0):
            boot.append(slope(c))
    se = float(np.std(boot, ddof=1)) if len(boot) > 1 else float("nan")

    half = n_fit // 2
    first = float(slope(total.astype(float), slice(0, half + 1)))
    second = float(slope(total.astype(float), slice(half, None)))
    drift_z = (second - first) / (max(se, 1e-300) * math.sqrt(2))
    extra = {
        "x0": x0,
        "window": [t1, t2],
        "survivors": [int(v) for v in total],
        "fit_times": [float(v) for v in t_fit],
        "first_half_rate": first,
        "second_half_rate": second,
        "drift_z": float(drift_z),
        "pre_asymptotic": bool(rate * t1 < 1.0),
    }
    return McEstimate(rate, se, n_paths, dt, seed, extra)
