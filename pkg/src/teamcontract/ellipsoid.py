"""Production-constrained reformulation solved with the ellipsoid method.

``min_share`` solves one program ``min sum(beta) s.t. F(beta) >= k``;
``find_contract_ellipsoid`` runs the depth-first search over production
levels that shares ellipsoids between levels and memoizes visited levels,
then polishes the answer with a golden-section search over levels.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .equilibrium import OracleCounter, induced_gradient, induced_production
from .production import ProductionSpec
from .report import SolveReport

DEFAULT_EPS = 1e-4
DEFAULT_BUDGET = 10**6


class DegenerateEllipsoid(ArithmeticError):
    pass


@dataclass
class Ellipsoid:
    """{z : (z - center)^T shape^{-1} (z - center) <= 1}."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.shape = np.asarray(self.shape, dtype=float)
        n = self.center.size
        if self.center.ndim != 1 or self.shape.shape != (n, n):
            raise ValueError("center must be a vector and shape a matching square matrix")
        if not np.allclose(self.shape, self.shape.T, rtol=1e-12, atol=0):
            raise ValueError("shape matrix must be symmetric")
        if not np.linalg.eigvalsh(self.shape)[0] > 0:
            raise ValueError("shape matrix must be positive definite")

    @classmethod
    def ball(cls, center, radius_sq: float) -> "Ellipsoid":
        center = np.asarray(center, dtype=float)
        return cls(center, radius_sq * np.eye(center.size))

    @classmethod
    def initial(cls, n: int) -> "Ellipsoid":
        """Ball around (1/2, ..., 1/2) of squared radius n; it contains [0, 1]^n."""
        return cls.ball(np.full(n, 0.5), float(n))

    @property
    def n(self) -> int:
        return self.center.size

    def width(self, g) -> float:
        """sqrt(g^T Q g): half the extent of the ellipsoid along g (for unit g)."""
        g = np.asarray(g, dtype=float)
        return math.sqrt(float(g @ self.shape @ g))

    def contains(self, z, tol: float = 1e-12) -> bool:
        d = np.asarray(z, dtype=float) - self.center
        return float(d @ np.linalg.solve(self.shape, d)) <= 1 + tol


def det_ratio(n: int) -> float:
    """det(Q')/det(Q) for one central cut in dimension n."""
    if n == 1:
        return 0.25
    return (n * n / (n * n - 1.0)) ** n * (1 - 2.0 / (n + 1))


def _cut(x: np.ndarray, Q: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.size
    Qg = Q @ g
    gQg = float(g @ Qg)
    if not gQg > 0:
        raise DegenerateEllipsoid(f"g^T Q g = {gQg:.3e}")
    b = Qg / math.sqrt(gQg)
    if n == 1:
        return x - 0.5 * b, 0.25 * Q
    x_new = x - b / (n + 1)
    Q_new = (n * n / (n * n - 1.0)) * (Q - (2.0 / (n + 1)) * np.outer(b, b))
    return x_new, 0.5 * (Q_new + Q_new.T)


def ellipsoid_cut(e: Ellipsoid, g) -> Ellipsoid:
    """Minimum-volume ellipsoid containing {z in e : g^T z <= g^T center}."""
    g = np.asarray(g, dtype=float)
    if g.shape != e.center.shape or not np.any(g):
        raise ValueError("cut direction must be a nonzero vector of matching size")
    x, Q = _cut(e.center, e.shape, g)
    return Ellipsoid(x, Q)


@dataclass
class SearchState:
    eps: float = DEFAULT_EPS
    budget: int = DEFAULT_BUDGET
    counter: OracleCounter = field(default_factory=OracleCounter)
    visited: set[int] = field(default_factory=set)
    best_contract: np.ndarray | None = None
    best_utility: float = -math.inf
    steps: int = 0
    truncated: bool = False
    strict_levels: bool = True
    prune: bool = True
    pruned: int = 0
    level_eps: float | None = None  # level-grid resolution; defaults to eps
    refine: bool = True

    @property
    def grid(self) -> float:
        return self.eps if self.level_eps is None else self.level_eps

    def level_index(self, value: float) -> int:
        """Index m of the grid level ceil(value / grid) * grid."""
        return math.ceil(value / self.grid - 1e-9)

    def offer(self, x: np.ndarray, F: float):
        u = (1.0 - float(x.sum())) * F
        if u > self.best_utility:
            self.best_utility = u
            self.best_contract = x.copy()


@dataclass
class CutDecision:
    """What to do at the current center.

    ``kind`` is ``"positivity"`` (some share is nonpositive) or ``"level"``.
    ``opens_level`` marks a newly visited production level, whose branch
    starts with ``production_cut`` (left as None when the gradient is deferred).
    ``follow_up`` is the cut applied in the current branch.
    """

    kind: str
    follow_up: np.ndarray
    index: int | None = None
    value: float | None = None
    level: int | None = None
    opens_level: bool = False
    production_cut: np.ndarray | None = None

    @property
    def follow_up_kind(self) -> str:
        if self.kind == "positivity":
            return "positivity"
        return "objective" if np.all(self.follow_up > 0) else "production"


def _positivity(n: int, i: int) -> CutDecision:
    g = np.zeros(n)
    g[i] = -1.0
    return CutDecision("positivity", g, index=i)


def separation_step(
    spec: ProductionSpec, e: Ellipsoid, k: float, state: SearchState, eager: bool = True
) -> CutDecision:
    """Choose the cuts at the center of ``e`` while searching at production level ``k``.

    A nonpositive share yields a cut keeping z_i >= x_i. Otherwise F(x) is
    rounded up to the eps-grid; an unvisited level is marked visited and gets a
    production cut (keep grad F(x)^T (z - x) >= 0). The current branch then
    continues with the objective cut on sum(beta), or, in ``strict_levels``
    mode, with a production cut when x is infeasible for level k.
    With ``eager=False`` the gradient for a new level is left to the caller.
    """
    x = e.center
    n = x.size
    nonpos = np.nonzero(x <= 0)[0]
    if nonpos.size:
        return _positivity(n, int(nonpos[0]))

    F = induced_production(spec, x, state.counter)
    if not np.isfinite(F):
        return _positivity(n, int(np.argmin(x)))
    m = state.level_index(F)
    is_new = m not in state.visited
    if is_new:
        state.visited.add(m)

    infeasible_here = state.strict_levels and F < k * (1 - 1e-12) and x.sum() <= 1
    grad = None
    if infeasible_here or (is_new and eager):
        grad = _cut_gradient(spec, x, state)
    follow = -grad if (infeasible_here and grad is not None) else np.ones(n)
    production = -grad if (is_new and grad is not None) else None
    return CutDecision("level", follow, value=F, level=m, opens_level=is_new, production_cut=production)


def _cut_gradient(spec, x, state) -> np.ndarray | None:
    grad = induced_gradient(spec, x, state.counter)
    if np.all(np.isfinite(grad)) and np.any(grad):
        return grad
    return None


def find_contract_ellipsoid(
    spec: ProductionSpec,
    state: SearchState | None = None,
    trace: Callable[[dict], None] | None = None,
) -> SolveReport:
    """Depth-first ellipsoid search over production levels.

    Each stack entry is (center, shape, level, pending). A branch ends once the
    ellipsoid is thinner than eps along the all-ones direction; every strictly
    positive center visited is a candidate contract. A ``pending`` entry is a
    freshly opened level whose production cut at ``center`` is applied only if
    the branch survives pruning. Unless ``state.refine`` is off, the search is
    followed by ``refine_levels``.
    """
    state = state or SearchState()
    t0 = time.perf_counter()
    n = spec.n
    ones = np.ones(n)
    e0 = Ellipsoid.initial(n)
    state.visited.add(0)
    stack = [(e0.center, e0.shape, 0.0, False)]

    while stack:
        x, Q, k, pending = stack.pop()
        width = math.sqrt(max(float(ones @ Q @ ones), 0.0))
        if width < state.eps:
            if np.all(x > 0):
                state.offer(x, induced_production(spec, x, state.counter))
            continue
        if state.prune and k > 0 and _upper_bound(spec, x, Q, width, state) <= state.best_utility:
            state.pruned += 1
            continue
        if state.steps >= state.budget:
            state.truncated = True
            break

        if pending:
            grad = _cut_gradient(spec, x, state)
            if grad is not None:
                state.steps += 1
                try:
                    stack.append((*_cut(x, Q, -grad), k, False))
                except DegenerateEllipsoid:
                    pass
            continue

        decision = separation_step(spec, _raw(x, Q), k, state, eager=False)
        if decision.value is not None:
            state.offer(x, decision.value)
        if trace is not None:
            trace({
                "level": k,
                "cut": decision.follow_up_kind,
                "new_level": decision.level * state.grid if decision.opens_level else None,
                "center": x.tolist(),
                "F": decision.value,
            })

        state.steps += 1
        try:
            stack.append((*_cut(x, Q, decision.follow_up), k, False))
        except DegenerateEllipsoid:
            pass
        # the new-level branch is explored before the current branch continues
        if decision.opens_level:
            level = decision.level * state.grid
            if decision.production_cut is not None:
                state.steps += 1
                try:
                    stack.append((*_cut(x, Q, decision.production_cut), level, False))
                except DegenerateEllipsoid:
                    pass
            else:
                stack.append((x, Q, level, True))

    if state.refine and not state.truncated:
        refine_levels(spec, state)

    best = state.best_contract if state.best_contract is not None else np.zeros(n)
    return SolveReport(
        method="ellipsoid",
        contract=best,
        utility=max(state.best_utility, 0.0) if state.best_contract is None else state.best_utility,
        eps=state.eps,
        induced_evals=state.counter.induced_evals,
        induced_grad_evals=state.counter.induced_grad_evals,
        truncated=state.truncated,
        wall_ms=1e3 * (time.perf_counter() - t0),
        levels=sorted(m * state.grid for m in state.visited),
    )


GOLDEN = (math.sqrt(5) - 1) / 2


def refine_levels(spec: ProductionSpec, state: SearchState, tol: float | None = None) -> None:
    """Golden-section search of k -> (1 - MinShare(k)) * k on [0, F(1, ..., 1)].

    Each probe solves MinShare(k) from a fresh ellipsoid, so it does not
    inherit objective cuts made for lower levels during the depth-first
    search. The curve is unimodal whenever F is homogeneous (Cobb-Douglas,
    CES). Every probe's contract is offered to ``state``.
    """
    n = spec.n
    hi = float(induced_production(spec, np.ones(n), state.counter))
    tol = state.grid * 1e-2 if tol is None else tol

    def value(k: float) -> float:
        remaining = state.budget - state.steps
        if remaining <= 0:
            state.truncated = True
            return 0.0
        res = min_share(spec, k, state.eps, state.counter, max_iters=remaining)
        state.steps += res.iterations
        if not res.attainable:
            return 0.0
        state.offer(res.contract, induced_production(spec, res.contract, state.counter))
        return (1.0 - res.value) * k

    a, b = 0.0, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    vc, vd = value(c), value(d)
    while b - a > tol and not state.truncated:
        if vc >= vd:
            b, d, vd = d, c, vc
            c = b - GOLDEN * (b - a)
            vc = value(c)
        else:
            a, c, vc = c, d, vd
            d = a + GOLDEN * (b - a)
            vd = value(d)


def _upper_bound(spec, x, Q, width, state) -> float:
    """Utility bound for contracts in the ellipsoid (x, Q).

    sum(z) >= sum(x) - width on the ellipsoid, and since F is monotone it is
    at most F at the corner of the bounding box; contracts worth anything
    have every share at most one, so the corner is clipped there.
    """
    slack = 1.0 - float(x.sum()) + width
    if slack <= 0:
        return slack
    corner = np.clip(x + np.sqrt(np.maximum(np.diag(Q), 0.0)), 0.0, 1.0)
    return min(slack, 1.0) * induced_production(spec, corner, state.counter)


def _raw(x, Q) -> Ellipsoid:
    # skips the eigenvalue check on hot paths; _cut keeps Q symmetric
    e = Ellipsoid.__new__(Ellipsoid)
    e.center, e.shape = x, Q
    return e


@dataclass(frozen=True)
class MinShareResult:
    value: float
    contract: np.ndarray
    attainable: bool
    iterations: int


def min_share(
    spec: ProductionSpec,
    k: float,
    eps: float = DEFAULT_EPS,
    counter: OracleCounter | None = None,
    max_iters: int = DEFAULT_BUDGET,
) -> MinShareResult:
    """MinShare(k) = min sum(beta) s.t. F(beta) >= k, beta >= 0, sum(beta) <= 1.

    Returns ``value = inf`` and ``attainable = False`` when the ellipsoid
    collapses below volume (eps/n)^n without meeting a feasible point.
    """
    if k < 0:
        raise ValueError("production level must be nonnegative")
    n = spec.n
    if k == 0:
        return MinShareResult(0.0, np.zeros(n), True, 0)
    counter = counter if counter is not None else OracleCounter()
    e = Ellipsoid.initial(n)
    x, Q = e.center, e.shape
    ones = np.ones(n)
    log_det = float(np.linalg.slogdet(Q)[1])
    log_det_floor = 2 * n * math.log(eps / n)
    log_step = math.log(det_ratio(n))
    best, best_x = math.inf, None

    it = 0
    for it in range(1, max_iters + 1):
        if best < math.inf and math.sqrt(max(float(ones @ Q @ ones), 0.0)) < eps:
            break
        if best == math.inf and log_det < log_det_floor:
            break
        if np.any(x <= 0):
            g = np.zeros(n)
            g[int(np.argmax(x <= 0))] = -1.0
        elif x.sum() > 1:
            g = ones
        else:
            F = induced_production(spec, x, counter)
            if F < k:
                g = -induced_gradient(spec, x, counter)
            else:
                if x.sum() < best:
                    best, best_x = float(x.sum()), x.copy()
                g = ones
        try:
            x, Q = _cut(x, Q, g)
        except DegenerateEllipsoid:
            break
        log_det += log_step

    if best_x is None:
        return MinShareResult(math.inf, np.full(n, np.nan), False, it)
    return MinShareResult(best, best_x, True, it)
