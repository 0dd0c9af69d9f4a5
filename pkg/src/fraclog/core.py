"""Problem model: geometry, coefficient profiles, grids and the standing hypotheses.

Everything here is one-dimensional. A problem lives on an open interval
``domain = (x_l, x_r)`` with a (possibly empty) open subinterval ``d0`` on
which the absorption coefficient ``b`` vanishes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

VALIDATION_N = 1024

CONFIG_KEYS = ("alpha", "domain", "d0", "a", "b", "phi", "p")


def fmt(x) -> str:
    """Number as text with 17 significant digits (lossless for doubles)."""
    return format(float(x), ".17g")


class FraclogError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(FraclogError, ValueError):
    """Invalid input. ``hypothesis`` names the violated condition (H1, H2, geometry, ...)."""

    def __init__(self, message: str, hypothesis: str = "config"):
        super().__init__(f"[{hypothesis}] {message}")
        self.hypothesis = hypothesis


class NumericalError(FraclogError, RuntimeError):
    """A solver failed to reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), **diagnostics: Any):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual
        self.diagnostics = diagnostics


# ---------------------------------------------------------------------------
# coefficient profiles

PROFILE_PARAMS: dict[str, dict[str, Any]] = {
    "constant": {"value": 1.0},
    "distance_to_d0": {"scale": 1.0, "power": 1.0},
    "parabolic_bump": {"amplitude": 1.0, "center": 0.0, "halfwidth": 1.0},
    "indicator": {"left": -1.0, "right": 1.0, "value": 1.0},
    "product": {"factors": None},
}


@dataclass(frozen=True)
class Profile:
    """A named, parameterized coefficient function of ``x``.

    ``distance_to_d0`` needs the hole ``d0``; it is passed at evaluation time.
    ``product`` multiplies its ``factors`` (a tuple of profiles).
    """

    name: str
    params: tuple = ()

    @classmethod
    def make(cls, name: str, **params) -> "Profile":
        if name not in PROFILE_PARAMS:
            raise ValidationError(f"unknown profile {name!r}", "config")
        allowed = PROFILE_PARAMS[name]
        unknown = set(params) - set(allowed)
        if unknown:
            raise ValidationError(f"profile {name!r}: unknown parameters {sorted(unknown)}", "config")
        if name == "product":
            factors = params.get("factors")
            if not factors:
                raise ValidationError("product profile needs a non-empty 'factors' list", "config")
            factors = tuple(f if isinstance(f, Profile) else cls.from_dict(f) for f in factors)
            return cls(name, (("factors", factors),))
        merged = dict(allowed)
        for key, value in params.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValidationError(f"profile {name!r}: parameter {key!r} must be a number", "config")
            merged[key] = float(value)
        if name == "parabolic_bump" and merged["halfwidth"] <= 0:
            raise ValidationError("parabolic_bump halfwidth must be positive", "config")
        return cls(name, tuple(sorted(merged.items())))

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "Profile":
        if not isinstance(raw, Mapping) or "name" not in raw:
            raise ValidationError("profile must be an object with a 'name'", "config")
        extra = set(raw) - {"name", "params"}
        if extra:
            raise ValidationError(f"profile: unknown keys {sorted(extra)}", "config")
        return cls.make(raw["name"], **dict(raw.get("params") or {}))

    def to_dict(self) -> dict:
        p = dict(self.params)
        if self.name == "product":
            return {"name": "product", "params": {"factors": [f.to_dict() for f in p["factors"]]}}
        return {"name": self.name, "params": p}

    def __call__(self, x, d0: tuple[float, float] | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = dict(self.params)
        if self.name == "constant":
            return np.full_like(x, p["value"])
        if self.name == "distance_to_d0":
            if d0 is None:
                # no hole: the distance is infinite everywhere, which no bounded b can encode
                raise ValidationError("distance_to_d0 profile requires a nonempty d0", "H1")
            lo, hi = d0
            dist = np.maximum(0.0, np.maximum(lo - x, x - hi))
            return p["scale"] * dist ** p["power"]
        if self.name == "parabolic_bump":
            s = (x - p["center"]) / p["halfwidth"]
            return p["amplitude"] * np.maximum(0.0, 1.0 - s * s)
        if self.name == "indicator":
            return np.where((x > p["left"]) & (x < p["right"]), p["value"], 0.0)
        out = np.ones_like(x)
        for f in p["factors"]:
            out = out * f(x, d0)
        return out


# ---------------------------------------------------------------------------
# problem + grid


@dataclass(frozen=True)
class ProblemSpec:
    alpha: float
    domain: tuple[float, float]
    d0: tuple[float, float] | None
    a: float
    b: Profile
    phi: Profile
    p: float = 2.0

    def b_values(self, x) -> np.ndarray:
        return self.b(x, self.d0)

    def phi_values(self, x) -> np.ndarray:
        return self.phi(x, self.d0)

    def in_closure_d0(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.d0 is None:
            return np.zeros(x.shape, dtype=bool)
        return (x >= self.d0[0]) & (x <= self.d0[1])

    def in_d0(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.d0 is None:
            return np.zeros(x.shape, dtype=bool)
        return (x > self.d0[0]) & (x < self.d0[1])

    def to_config(self) -> dict:
        return {
            "alpha": self.alpha,
            "domain": list(self.domain),
            "d0": None if self.d0 is None else list(self.d0),
            "a": self.a,
            "b": self.b.to_dict(),
            "phi": self.phi.to_dict(),
            "p": self.p,
        }

    def replace(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``n`` interior nodes on ``(left, right)``; boundary nodes are implicit."""

    left: float
    right: float
    n: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 3:
            raise ValidationError(f"need at least 3 interior nodes, got n={self.n}", "resolution")
        if not self.right > self.left:
            raise ValidationError("grid interval is empty", "geometry")
        h = (self.right - self.left) / (self.n + 1)
        object.__setattr__(self, "h", h)
        nodes = self.left + h * np.arange(1, self.n + 1)
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)


def build_grid(problem: ProblemSpec, n: int) -> Grid1D:
    return Grid1D(problem.domain[0], problem.domain[1], int(n))


def obstacle_vector(grid: Grid1D, problem: ProblemSpec) -> np.ndarray:
    """Upper obstacle: ``+inf`` at nodes strictly inside d0, 1 elsewhere (endpoints included)."""
    return np.where(problem.in_d0(grid.nodes), np.inf, 1.0)


def b_field(grid: Grid1D, problem: ProblemSpec) -> np.ndarray:
    return problem.b_values(grid.nodes)


def phi_field(grid: Grid1D, problem: ProblemSpec) -> np.ndarray:
    return problem.phi_values(grid.nodes)


# ---------------------------------------------------------------------------
# validation


def _number(raw: Mapping, key: str) -> float:
    value = raw.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"{key!r} must be a finite number", "config")
    return float(value)


def _interval(value, key: str) -> tuple[float, float]:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise ValidationError(f"{key!r} must be a pair of numbers", "config")
    return float(value[0]), float(value[1])


def check_hypotheses(problem: ProblemSpec, n: int = VALIDATION_N) -> None:
    """Check (H1), (H2) and the geometry on a validation grid; raise ValidationError."""
    xl, xr = problem.domain
    if not xl < xr:
        raise ValidationError("domain must satisfy x_l < x_r", "geometry")
    if problem.d0 is not None:
        lo, hi = problem.d0
        if not (xl < lo < hi < xr):
            raise ValidationError("d0 must lie strictly inside the domain", "geometry")
    if not 0.0 < problem.alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0,1), got {problem.alpha}", "parameter")
    if not problem.p > 1.0:
        raise ValidationError(f"p must exceed 1, got {problem.p}", "parameter")
    if problem.a < 0:
        raise ValidationError(f"a must be nonnegative, got {problem.a}", "parameter")

    x = Grid1D(xl, xr, n).nodes
    if problem.d0 is not None:
        # the d0 endpoints belong to the zero set of b as well
        x = np.union1d(x, np.asarray(problem.d0))
    b = problem.b_values(x)
    if not np.all(np.isfinite(b)):
        raise ValidationError("b must be finite", "H1")
    if np.any(b < 0):
        raise ValidationError("b must be nonnegative", "H1")
    closure = problem.in_closure_d0(x)
    if np.any(b[closure] != 0.0):
        raise ValidationError("{b=0} = closure(D_0) fails: b is positive somewhere on closure(D_0)", "H1")
    if np.any(b[~closure] <= 0.0):
        raise ValidationError("b vanishes on a compact subset of D \\ closure(D_0)", "H1")

    phi = problem.phi_values(x)
    if not np.all(np.isfinite(phi)):
        raise ValidationError("phi must be bounded", "H2")
    if np.any(phi < 0):
        raise ValidationError("phi must be nonnegative", "H2")
    if np.any(phi[~closure] > 1.0):
        raise ValidationError("phi exceeds 1 on D \\ closure(D_0)", "H2")
    if not np.any(phi > 0):
        raise ValidationError("phi is identically zero", "H2")


def validate_problem(raw: Mapping[str, Any] | ProblemSpec) -> ProblemSpec:
    """Parse a configuration record into a checked ProblemSpec."""
    if isinstance(raw, ProblemSpec):
        raw = raw.to_config()
    if not isinstance(raw, Mapping):
        raise ValidationError("configuration must be a JSON object", "config")
    unknown = set(raw) - set(CONFIG_KEYS)
    if unknown:
        raise ValidationError(f"unknown keys {sorted(unknown)}", "config")
    missing = {"alpha", "domain", "a", "b", "phi"} - set(raw)
    if missing:
        raise ValidationError(f"missing keys {sorted(missing)}", "config")
    d0 = raw.get("d0")
    problem = ProblemSpec(
        alpha=_number(raw, "alpha"),
        domain=_interval(raw["domain"], "domain"),
        d0=None if d0 is None else _interval(d0, "d0"),
        a=_number(raw, "a"),
        b=Profile.from_dict(raw["b"]),
        phi=Profile.from_dict(raw["phi"]),
        p=_number(raw, "p") if "p" in raw else 2.0,
    )
    check_hypotheses(problem)
    return problem


def load_config(path) -> ProblemSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed JSON: {exc}", "config") from None
    return validate_problem(raw)


CANONICAL_CONFIG = {
    "alpha": 0.5,
    "domain": [-1.0, 1.0],
    "d0": [-0.3, 0.3],
    "a": 2.0,
    "b": {"name": "distance_to_d0", "params": {"scale": 1.0, "power": 1.0}},
    "phi": {"name": "parabolic_bump", "params": {"amplitude": 0.9, "center": 0.0, "halfwidth": 1.0}},
    "p": 2.0,
}


def canonical_problem(**overrides) -> ProblemSpec:
    """The project-wide test problem: D=(-1,1), D0=(-0.3,0.3), alpha=1/2, a=2."""
    cfg = dict(CANONICAL_CONFIG)
    cfg.update(overrides)
    return validate_problem(cfg)
