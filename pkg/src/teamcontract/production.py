"""Production functions for the team model.

Three families are supported: Cobb-Douglas, CES with a negative substitution
parameter, and custom strongly separable functions ``C * h(sum_i g_i(a_i))``
built from a small set of named primitives.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

CD = "cd"
CES = "ces"
CUSTOM = "custom"
KINDS = (CD, CES, CUSTOM)

# bisection bracket and iteration count for inverting 1/g_i'
INVERSE_LO = 1e-12
INVERSE_HI = 1e12
INVERSE_ITERS = 200


@dataclass(frozen=True)
class Primitive:
    """A named scalar building block with analytic first and second derivatives.

    ``power``    coef * x**p          (x > 0)
    ``log``      coef * ln(x)         (x > 0)
    ``exp``      coef * exp(p * x)
    ``negpower`` coef * (-x)**p       (x < 0)
    """

    name: str
    coef: float = 1.0
    p: float = 1.0

    def __post_init__(self):
        if self.name not in _PRIMITIVES:
            raise ValueError(f"unknown primitive {self.name!r}; expected one of {sorted(_PRIMITIVES)}")

    def value(self, x):
        return _PRIMITIVES[self.name][0](np.asarray(x, dtype=float), self.coef, self.p)

    def d1(self, x):
        return _PRIMITIVES[self.name][1](np.asarray(x, dtype=float), self.coef, self.p)

    def d2(self, x):
        return _PRIMITIVES[self.name][2](np.asarray(x, dtype=float), self.coef, self.p)

    def scaled(self, factor: float) -> "Primitive":
        return Primitive(self.name, self.coef * factor, self.p)

    def to_dict(self) -> dict:
        return {"name": self.name, "coef": self.coef, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "Primitive":
        return cls(d["name"], float(d.get("coef", 1.0)), float(d.get("p", 1.0)))


_PRIMITIVES = {
    "power": (
        lambda x, c, p: c * x**p,
        lambda x, c, p: c * p * x ** (p - 1),
        lambda x, c, p: c * p * (p - 1) * x ** (p - 2),
    ),
    "log": (
        lambda x, c, p: c * np.log(x),
        lambda x, c, p: c / x,
        lambda x, c, p: -c / x**2,
    ),
    "exp": (
        lambda x, c, p: c * np.exp(p * x),
        lambda x, c, p: c * p * np.exp(p * x),
        lambda x, c, p: c * p * p * np.exp(p * x),
    ),
    "negpower": (
        lambda x, c, p: c * (-x) ** p,
        lambda x, c, p: -c * p * (-x) ** (p - 1),
        lambda x, c, p: c * p * (p - 1) * (-x) ** (p - 2),
    ),
}


@dataclass(frozen=True)
class ProductionSpec:
    """Production function f together with its output scale C.

    ``weights`` holds the Cobb-Douglas exponents or the CES weights; for custom
    specs it is unused and the agent count comes from ``g``.
    """

    kind: str
    scale: float = 1.0
    weights: tuple[float, ...] = ()
    r: float | None = None
    d: float | None = None
    h: Primitive | None = None
    g: tuple[Primitive, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown production kind {self.kind!r}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive")
        if self.kind == CUSTOM:
            if self.h is None or len(self.g) == 0:
                raise ValueError("custom production needs h and at least one g_i")
            return
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("need at least one agent")
        if not np.all(w > 0):
            raise ValueError("weights must be strictly positive")
        if self.kind == CD and not w.sum() < 1:
            raise ValueError("Cobb-Douglas exponents must sum to less than 1")
        if self.kind == CES:
            if self.r is None or not self.r < 0:
                raise ValueError("CES substitution parameter r must be negative")
            if self.d is None or not 0 < self.d < 1:
                raise ValueError("CES returns to scale d must lie in (0, 1)")

    @classmethod
    def cobb_douglas(cls, exponents, scale: float = 1.0) -> "ProductionSpec":
        return cls(CD, float(scale), tuple(float(k) for k in exponents))

    @classmethod
    def ces(cls, weights, r: float, d: float, scale: float = 1.0) -> "ProductionSpec":
        return cls(CES, float(scale), tuple(float(k) for k in weights), float(r), float(d))

    @classmethod
    def custom(cls, h: Primitive, g, scale: float = 1.0) -> "ProductionSpec":
        return cls(CUSTOM, float(scale), h=h, g=tuple(g))

    @property
    def n(self) -> int:
        return len(self.g) if self.kind == CUSTOM else len(self.weights)

    @property
    def k(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def with_scale(self, scale: float) -> "ProductionSpec":
        return ProductionSpec(self.kind, float(scale), self.weights, self.r, self.d, self.h, self.g)

    def separable_form(self) -> tuple[Primitive, tuple[Primitive, ...]]:
        """Return (h, g_1..g_n) with f = h(sum g_i(a_i)); the scale is folded into h."""
        if self.kind == CD:
            return Primitive("exp", self.scale, 1.0), tuple(Primitive("log", k) for k in self.weights)
        if self.kind == CES:
            h = Primitive("negpower", self.scale, self.d / self.r)
            return h, tuple(Primitive("power", -k, self.r) for k in self.weights)
        return self.h.scaled(self.scale), self.g

    def to_dict(self) -> dict[str, Any]:
        if self.kind == CD:
            params = {"exponents": list(self.weights)}
        elif self.kind == CES:
            params = {"weights": list(self.weights), "r": self.r, "d": self.d}
        else:
            params = {"h": self.h.to_dict(), "g": [gi.to_dict() for gi in self.g]}
        return {"kind": self.kind, "scale": self.scale, "params": params}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ProductionSpec":
        kind = doc["kind"]
        params = doc.get("params", {})
        scale = float(doc.get("scale", 1.0))
        if kind == CD:
            return cls.cobb_douglas(params["exponents"], scale)
        if kind == CES:
            return cls.ces(params["weights"], params["r"], params["d"], scale)
        if kind == CUSTOM:
            return cls.custom(Primitive.from_dict(params["h"]), [Primitive.from_dict(x) for x in params["g"]], scale)
        raise ValueError(f"unknown production kind {kind!r}")


def _check_actions(spec: ProductionSpec, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[-1:] != (spec.n,):
        raise ValueError(f"expected {spec.n} actions, got shape {a.shape}")
    if np.any(a < 0) or np.any(np.isnan(a)):
        raise ValueError("effort must be nonnegative")
    return a


def eval_production(spec: ProductionSpec, a):
    """Output f(a). Accepts a single profile or a stack of profiles (last axis = agents)."""
    a = _check_actions(spec, a)
    with np.errstate(divide="ignore", over="ignore"):
        if spec.kind == CD:
            out = spec.scale * np.exp(np.log(a) @ spec.k)
        elif spec.kind == CES:
            t = (a**spec.r) @ spec.k
            # any zero effort sends t to +inf, and t**(d/r) to 0
            out = spec.scale * np.where(np.isinf(t), 0.0, t ** (spec.d / spec.r))
        else:
            h, g = spec.separable_form()
            s = sum(gi.value(a[..., i]) for i, gi in enumerate(g))
            out = h.value(s)
    return float(out) if np.ndim(out) == 0 else out


def eval_gradient(spec: ProductionSpec, a) -> np.ndarray:
    """Analytic gradient of f at a strictly positive effort profile."""
    a = _check_actions(spec, a)
    if np.any(a <= 0):
        raise ValueError("gradient requires strictly positive effort")
    if spec.kind == CD:
        return spec.k * eval_production(spec, a) / a
    if spec.kind == CES:
        r, d = spec.r, spec.d
        t = float(spec.k @ a**r)
        return spec.scale * d * t ** (d / r - 1) * spec.k * a ** (r - 1)
    h, g = spec.separable_form()
    s = sum(float(gi.value(a[i])) for i, gi in enumerate(g))
    return float(h.d1(s)) * np.array([float(gi.d1(a[i])) for i, gi in enumerate(g)])


def eval_hessian(spec: ProductionSpec, a) -> np.ndarray:
    a = _check_actions(spec, a)
    if np.any(a <= 0):
        raise ValueError("Hessian requires strictly positive effort")
    if spec.kind == CD:
        f = eval_production(spec, a)
        u = spec.k / a
        return f * (np.outer(u, u) - np.diag(spec.k / a**2))
    if spec.kind == CES:
        r, d, k, C = spec.r, spec.d, spec.k, spec.scale
        t = float(k @ a**r)
        v = k * a ** (r - 1)
        outer = C * d * (d / r - 1) * r * t ** (d / r - 2) * np.outer(v, v)
        return outer + np.diag(C * d * t ** (d / r - 1) * k * (r - 1) * a ** (r - 2))
    h, g = spec.separable_form()
    s = sum(float(gi.value(a[i])) for i, gi in enumerate(g))
    g1 = np.array([float(gi.d1(a[i])) for i, gi in enumerate(g)])
    g2 = np.array([float(gi.d2(a[i])) for i, gi in enumerate(g)])
    return float(h.d2(s)) * np.outer(g1, g1) + float(h.d1(s)) * np.diag(g2)


@dataclass(frozen=True)
class ConditionVerdict:
    """Outcome of the sampled separability check.

    A pass only means no violation was found on the probe grid.
    """

    status: str  # "pass" | "fail" | "not-applicable"
    reason: str = "no violation found on grid"
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def invert_reciprocal_derivative(gi: Primitive, s) -> np.ndarray:
    """Solve 1/g_i'(a) = s for a by bisection in log(a), vectorized over s."""
    s = np.asarray(s, dtype=float)
    lo = np.full(s.shape, np.log(INVERSE_LO))
    hi = np.full(s.shape, np.log(INVERSE_HI))
    phi = lambda u: 1.0 / gi.d1(np.exp(u))
    increasing = phi(np.log(INVERSE_HI)) > phi(np.log(INVERSE_LO))
    for _ in range(INVERSE_ITERS):
        mid = 0.5 * (lo + hi)
        below = (phi(mid) < s) == increasing
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.exp(0.5 * (lo + hi))


def check_separable_condition(
    spec: ProductionSpec,
    grid_size: int = 64,
    a_range: tuple[float, float] = (1e-6, 1e6),
) -> ConditionVerdict:
    """Probe the quasiconcavity condition on h and y_i = g_i o (1/g_i')^{-1}.

    For every agent the map y_i is sampled on ``grid_size`` log-spaced points
    covering the image of 1/g_i' over ``a_range``, then checked for strict
    increase and midpoint concavity over all grid pairs.
    """
    h, g = spec.separable_form()
    a_probe = np.geomspace(*a_range, grid_size)

    with np.errstate(all="ignore"):
        sums = sum(gi.value(a_probe) for gi in g)
        if not np.all(h.d1(sums) > 0):
            return ConditionVerdict("fail", "h is not strictly increasing", {"probe": "h'"})

        for i, gi in enumerate(g):
            d1 = gi.d1(a_probe)
            if not np.all(np.isfinite(d1)) or np.any(d1 <= 0):
                return ConditionVerdict("fail", "g_i is not strictly increasing", {"agent": i})
            phi = 1.0 / d1
            steps = np.diff(phi)
            if not (np.all(steps > 0) or np.all(steps < 0)):
                return ConditionVerdict("fail", "inverse not well-defined", {"agent": i, "reciprocal_derivative": phi[:3].tolist()})

            s = np.geomspace(phi.min(), phi.max(), grid_size)
            y = gi.value(invert_reciprocal_derivative(gi, s))
            if not np.all(np.diff(y) > 0):
                j = int(np.argmin(np.diff(y)))
                return ConditionVerdict("fail", "y_i not strictly increasing", {"agent": i, "s1": s[j], "s2": s[j + 1]})

            i1, i2 = np.triu_indices(grid_size, 1)
            y_mid = gi.value(invert_reciprocal_derivative(gi, 0.5 * (s[i1] + s[i2])))
            chord = 0.5 * (y[i1] + y[i2])
            tol = 1e-9 * (1 + np.abs(chord))
            bad = np.nonzero(y_mid < chord - tol)[0]
            if bad.size:
                j = bad[0]
                return ConditionVerdict(
                    "fail",
                    "y_i not concave",
                    {"agent": i, "s1": float(s[i1[j]]), "s2": float(s[i2[j]]), "y_mid": float(y_mid[j]), "chord": float(chord[j])},
                )
    return ConditionVerdict("pass")
