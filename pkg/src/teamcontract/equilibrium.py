"""Agents' first-order-condition equilibrium and the induced production F(beta)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .production import CD, CES, ProductionSpec, eval_gradient, eval_hessian, eval_production

BETA_MIN = 1e-9
FOC_TOL = 1e-10

NEWTON_MAX_ITERS = 200
NEWTON_MAX_HALVINGS = 60


class EquilibriumError(RuntimeError):
    """Raised when the first-order conditions cannot be solved to tolerance."""


@dataclass
class OracleCounter:
    """Per-solve tally of F and grad F queries."""

    induced_evals: int = 0
    induced_grad_evals: int = 0

    @property
    def total(self) -> int:
        return self.induced_evals + self.induced_grad_evals


@dataclass(frozen=True)
class EquilibriumResult:
    actions: np.ndarray
    output: float
    residual: float
    iterations: int


def _check_beta(spec: ProductionSpec, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1:] != (spec.n,):
        raise ValueError(f"expected a contract of length {spec.n}, got shape {beta.shape}")
    if np.any(beta < 0) or np.any(np.isnan(beta)):
        raise ValueError("contract shares must be nonnegative")
    return beta


def foc_residual(spec: ProductionSpec, beta, a) -> float:
    """max_i |beta_i * d_i f(a) - 1|."""
    return float(np.max(np.abs(beta * eval_gradient(spec, a) - 1.0)))


def _ces_log_terms(spec: ProductionSpec, beta):
    # with w_i = (k_i (C d beta_i)^r)^(1/(1-r)) and S = sum_i w_i, t = sum k_i a_i^r = S^((r-1)/(d-1))
    r, d, C, k = spec.r, spec.d, spec.scale, spec.k
    with np.errstate(divide="ignore"):
        log_w = (np.log(k) + r * np.log(C * d * beta)) / (1 - r)
    log_S = np.logaddexp.reduce(log_w, axis=-1)
    log_t = (r - 1) / (d - 1) * log_S
    return log_w, log_S, log_t


def _closed_form_actions(spec: ProductionSpec, beta: np.ndarray) -> np.ndarray:
    if spec.kind == CD:
        return beta * spec.k * _closed_form_output(spec, beta)
    r, d, k = spec.r, spec.d, spec.k
    log_w, _, log_t = _ces_log_terms(spec, beta)
    # k_i a_i^r = w_i * t^((r-d)/(r-1))
    log_kar = log_w + (r - d) / (r - 1) * log_t
    return np.exp((log_kar - np.log(k)) / r)


def _closed_form_output(spec: ProductionSpec, beta: np.ndarray):
    if spec.kind == CD:
        K = spec.k.sum()
        with np.errstate(divide="ignore"):
            log_inner = np.log(spec.scale) + np.log(spec.k * beta) @ spec.k
        return np.exp(log_inner / (1 - K))
    _, _, log_t = _ces_log_terms(spec, beta)
    # an idle agent (beta_i = 0) drives t to +inf and output to 0
    return spec.scale * np.exp(spec.d / spec.r * log_t)


def _newton(spec: ProductionSpec, beta: np.ndarray, u0=None) -> EquilibriumResult:
    """Damped Newton on log(beta_i d_i f(e^u)) = 0 in log-effort coordinates."""
    n = spec.n
    log_beta = np.log(beta)
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)

    def log_residual(u):
        with np.errstate(all="ignore"):
            grad = eval_gradient(spec, np.exp(u))
            return log_beta + np.log(grad), grad

    rho, grad = log_residual(u)
    if not np.all(np.isfinite(rho)):
        raise EquilibriumError("first-order conditions not evaluable at the starting point")
    norm = np.linalg.norm(rho)
    it = 0
    for it in range(1, NEWTON_MAX_ITERS + 1):
        a = np.exp(u)
        jac = eval_hessian(spec, a) * a[None, :] / grad[:, None]
        try:
            step = np.linalg.solve(jac, -rho)
        except np.linalg.LinAlgError as exc:
            residual = foc_residual(spec, beta, a)
            raise EquilibriumError(f"singular Jacobian at iteration {it}, residual {residual:.3e}") from exc
        t = 1.0
        for _ in range(NEWTON_MAX_HALVINGS):
            cand, cand_grad = log_residual(u + t * step)
            cand_norm = np.linalg.norm(cand)
            if np.all(np.isfinite(cand)) and cand_norm < norm:
                break
            t *= 0.5
        else:
            break
        u, rho, grad, norm = u + t * step, cand, cand_grad, cand_norm
        if norm < 1e-14:
            break

    a = np.exp(u)
    residual = foc_residual(spec, beta, a)
    if not residual <= FOC_TOL:
        raise EquilibriumError(f"Newton did not converge: residual {residual:.3e} after {it} iterations")
    return EquilibriumResult(a, eval_production(spec, a), residual, it)


def solve_equilibrium(spec: ProductionSpec, beta, method: str = "auto") -> EquilibriumResult:
    """Solve beta_i * d_i f(a) = 1 for the unique interior effort profile.

    ``method="auto"`` uses the closed form for Cobb-Douglas and CES (polished
    by Newton if rounding leaves the residual above tolerance) and Newton for
    custom specs; ``method="newton"`` forces the numeric path.
    """
    beta = _check_beta(spec, beta)
    if beta.ndim != 1:
        raise ValueError("solve_equilibrium takes a single contract")
    if np.any(beta < BETA_MIN):
        raise ValueError(f"shares below {BETA_MIN:g} have no interior equilibrium")
    if method not in ("auto", "newton"):
        raise ValueError(f"unknown method {method!r}")

    if method == "auto" and spec.kind in (CD, CES):
        a = _closed_form_actions(spec, beta)
        residual = foc_residual(spec, beta, a)
        if residual <= FOC_TOL:
            return EquilibriumResult(a, eval_production(spec, a), residual, 0)
        return _newton(spec, beta, u0=np.log(a))
    return _newton(spec, beta)


def induced_production(spec: ProductionSpec, beta, counter: OracleCounter | None = None):
    """F(beta) = f(a(beta)).

    Cobb-Douglas and CES use their closed forms and accept a stack of
    contracts (last axis = agents); custom specs go through Newton, with
    shares below ``BETA_MIN`` lifted to ``BETA_MIN``.
    """
    beta = _check_beta(spec, beta)
    batch = beta.shape[:-1]
    if counter is not None:
        counter.induced_evals += int(np.prod(batch)) if batch else 1
    if spec.kind in (CD, CES):
        out = _closed_form_output(spec, beta)
        return float(out) if np.ndim(out) == 0 else out
    if batch:
        flat = beta.reshape(-1, spec.n)
        return np.array([solve_equilibrium(spec, np.maximum(b, BETA_MIN)).output for b in flat]).reshape(batch)
    return solve_equilibrium(spec, np.maximum(beta, BETA_MIN)).output


def induced_gradient(spec: ProductionSpec, beta, counter: OracleCounter | None = None) -> np.ndarray:
    """grad_beta F(beta); analytic for CD/CES, central differences for custom specs."""
    beta = _check_beta(spec, beta)
    if np.any(beta <= 0):
        raise ValueError("induced gradient requires strictly positive shares")
    if counter is not None:
        counter.induced_grad_evals += 1
    if spec.kind == CD:
        F = _closed_form_output(spec, beta)
        return F * spec.k / ((1 - spec.k.sum()) * beta)
    if spec.kind == CES:
        r, d = spec.r, spec.d
        log_w, log_S, _ = _ces_log_terms(spec, beta)
        F = _closed_form_output(spec, beta)
        expo = (r - 1) * d / ((d - 1) * r)
        q = r / (1 - r)
        return F * expo * q * np.exp(log_w - log_S) / beta

    grad = np.empty(spec.n)
    for i in range(spec.n):
        h = 1e-6 * max(beta[i], 1.0)
        up, down = beta.copy(), beta.copy()
        up[i] += h
        if beta[i] - h >= BETA_MIN:
            down[i] -= h
        width = up[i] - down[i]
        grad[i] = (solve_equilibrium(spec, up).output - solve_equilibrium(spec, down).output) / width
    return grad


def principal_utility(spec: ProductionSpec, beta, counter: OracleCounter | None = None):
    """(1 - sum_i beta_i) * F(beta); negative when the shares exceed one."""
    beta = _check_beta(spec, beta)
    return (1.0 - beta.sum(axis=-1)) * induced_production(spec, beta, counter)


def cd_optimal_contract(spec: ProductionSpec) -> np.ndarray:
    """For Cobb-Douglas the optimal linear contract pays each agent its exponent."""
    if spec.kind != CD:
        raise ValueError("closed-form optimal contract exists only for Cobb-Douglas")
    return spec.k.copy()
