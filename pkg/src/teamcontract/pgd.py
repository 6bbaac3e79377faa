"""Share-constrained reformulation: projected normalized gradient ascent on F."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .equilibrium import BETA_MIN, OracleCounter, induced_gradient, induced_production
from .production import ProductionSpec
from .report import SolveReport


@dataclass(frozen=True)
class PgdConfig:
    eps: float = 1e-3
    eta0: float = 0.5
    max_inner: int = 5000
    stop_tol: float | None = None  # defaults to eps**2
    warm_start: bool = True

    def __post_init__(self):
        if not (self.eps > 0 and self.eta0 > 0 and self.max_inner >= 1):
            raise ValueError("eps and eta0 must be positive and max_inner at least 1")
        if self.stop_tol is not None and not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")

    @property
    def tol(self) -> float:
        return self.eps**2 if self.stop_tol is None else self.stop_tol


def project_capped_simplex(v, k: float) -> np.ndarray:
    """Euclidean projection of v onto {z >= 0, sum(z) <= k}."""
    v = np.asarray(v, dtype=float)
    if k < 0:
        raise ValueError("cap must be nonnegative")
    z = np.maximum(v, 0.0)
    if z.sum() <= k:
        return z
    if k == 0:
        return np.zeros_like(z)
    # onto {z >= 0, sum(z) = k}: z = max(v - tau, 0)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - k
    idx = np.arange(1, v.size + 1)
    active = np.flatnonzero(u - css / idx > 0)
    rho = active[-1] if active.size else 0  # empty only when k underflows against u[0]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


@dataclass(frozen=True)
class MaxProdResult:
    contract: np.ndarray
    value: float
    iterations: int
    converged: bool


def max_prod(
    spec: ProductionSpec,
    k: float,
    config: PgdConfig | None = None,
    counter: OracleCounter | None = None,
    x0=None,
    history: list | None = None,
) -> MaxProdResult:
    """MaxProd(k) = max F(beta) s.t. beta >= 0, sum(beta) <= k.

    Iterates x <- P(x + eta_t * grad F / |grad F|) with eta_t = eta0 * k / sqrt(t)
    and stops once the squared gradient mapping |x - P(x + eta_t g)|^2 / eta_t^2
    drops below the configured tolerance. Returns the best iterate seen;
    ``history``, if given, receives the best F value after every iteration.
    """
    config = config or PgdConfig()
    counter = counter if counter is not None else OracleCounter()
    n = spec.n
    if not 0 <= k <= 1:
        raise ValueError("share cap must lie in [0, 1]")
    if k == 0:
        return MaxProdResult(np.zeros(n), 0.0, 0, True)

    x = np.full(n, k / (2 * n)) if x0 is None else project_capped_simplex(x0, k)
    best_x, best_F = x, induced_production(spec, x, counter)
    converged = False
    t = 0
    for t in range(1, config.max_inner + 1):
        grad = induced_gradient(spec, np.maximum(x, BETA_MIN), counter)
        norm = np.linalg.norm(grad)
        if not (np.isfinite(norm) and norm > 0):
            break
        eta = config.eta0 * k / math.sqrt(t)
        x_new = project_capped_simplex(x + eta * grad / norm, k)
        mapping = (x - x_new) / eta
        if float(mapping @ mapping) <= config.tol:
            converged = True
            break
        x = x_new
        F = induced_production(spec, x, counter)
        if F > best_F:
            best_x, best_F = x, F
        if history is not None:
            history.append(best_F)
    return MaxProdResult(best_x, float(best_F), t, converged)


def find_contract_pgd(
    spec: ProductionSpec,
    config: PgdConfig | None = None,
    counter: OracleCounter | None = None,
    trace: Callable[[dict], None] | None = None,
) -> SolveReport:
    """Sweep the share cap k = 0, eps, 2 eps, ..., 1 and keep the best contract.

    Each cap is solved by ``max_prod``, warm-started from the previous cap's
    maximizer unless ``config.warm_start`` is off.
    """
    config = config or PgdConfig()
    counter = counter if counter is not None else OracleCounter()
    t0 = time.perf_counter()
    n = spec.n
    best_x, best_u = np.zeros(n), 0.0
    truncated = False
    x_prev = None
    steps = int(math.floor(1.0 / config.eps + 1e-9))
    for j in range(steps + 1):
        k = min(j * config.eps, 1.0)
        res = max_prod(spec, k, config, counter, x0=x_prev if config.warm_start else None)
        if k > 0 and not res.converged:
            truncated = True
        x_prev = res.contract
        # the maximizer may leave slack in the cap, so score the contract itself
        u = (1.0 - float(res.contract.sum())) * res.value
        if trace is not None:
            trace({"k": k, "inner_iters": res.iterations, "maxprod": res.value, "utility": (1 - k) * res.value})
        if u > best_u:
            best_x, best_u = res.contract, u

    return SolveReport(
        method="pgd",
        contract=best_x,
        utility=best_u,
        eps=config.eps,
        induced_evals=counter.induced_evals,
        induced_grad_evals=counter.induced_grad_evals,
        truncated=truncated,
        wall_ms=1e3 * (time.perf_counter() - t0),
    )
