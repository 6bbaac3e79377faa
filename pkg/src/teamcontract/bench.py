"""Benchmark instances, normalization, the grid oracle and the benchmark runner."""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .ellipsoid import SearchState, find_contract_ellipsoid
from .equilibrium import OracleCounter, cd_optimal_contract, induced_production, principal_utility
from .pgd import PgdConfig, find_contract_pgd
from .production import CD, ProductionSpec, check_separable_condition
from .report import SolveReport

NORMALIZATION_TARGET = 1.5
ORACLE_BUDGET = 10**6
GAP_THRESHOLD = 1e-5
DEFAULT_SEED = 20240601

CES_R = -1.3
CES_D = 0.2

CSV_COLUMNS = [
    "id", "method", "n", "eps", "utility", "gap", "sum_beta",
    "induced_evals", "induced_grad_evals", "wall_ms", "truncated",
]


@dataclass(frozen=True)
class BenchmarkInstance:
    id: str
    spec: ProductionSpec
    normalization_target: float = NORMALIZATION_TARGET
    known_contract: np.ndarray | None = None
    known_utility: float | None = None

    @property
    def n(self) -> int:
        return self.spec.n

    def to_dict(self) -> dict:
        doc = {"id": self.id, "normalization_target": self.normalization_target, **self.spec.to_dict()}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkInstance":
        spec = ProductionSpec.from_dict(doc)
        inst = cls(doc.get("id", spec.kind), spec, float(doc.get("normalization_target", NORMALIZATION_TARGET)))
        return with_known_optimum(inst)


def with_known_optimum(inst: BenchmarkInstance) -> BenchmarkInstance:
    if inst.spec.kind != CD:
        return inst
    beta = cd_optimal_contract(inst.spec)
    return replace(inst, known_contract=beta, known_utility=float(principal_utility(inst.spec, beta)))


def cd_exponents(n: int) -> np.ndarray:
    """k_i = 1 / (2n + i), i = 1..n."""
    if n < 1:
        raise ValueError("need at least one agent")
    return 1.0 / (2 * n + np.arange(1, n + 1))


def _coarse_optimum(spec: ProductionSpec) -> float:
    return find_contract_pgd(spec, PgdConfig(eps=1e-2)).utility


def normalize_scale(spec: ProductionSpec, target: float = NORMALIZATION_TARGET, max_steps: int = 60) -> ProductionSpec:
    """Rescale C so the principal's optimal utility is ``target``.

    Cobb-Douglas uses the closed form (utility at beta = k grows as
    C^(1/(1 - sum k))). Other kinds bisect on log C, estimating the optimum
    with a coarse share sweep, until within 1% of the target.
    """
    if not 1 <= target <= 2:
        raise ValueError("normalization target must lie in [1, 2]")
    if spec.kind == CD:
        base = spec.with_scale(1.0)
        u1 = float(principal_utility(base, cd_optimal_contract(base)))
        return base.with_scale((target / u1) ** (1 - spec.k.sum()))

    lo, hi = math.log(1e-6), math.log(1e6)
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        cand = spec.with_scale(math.exp(mid))
        u = _coarse_optimum(cand)
        if abs(u - target) <= 0.01 * target:
            return cand
        if u < target:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(f"scale bisection did not reach {target} within {max_steps} steps")


def make_cd_instance(n: int, target: float = NORMALIZATION_TARGET) -> BenchmarkInstance:
    spec = normalize_scale(ProductionSpec.cobb_douglas(cd_exponents(n)), target)
    return with_known_optimum(BenchmarkInstance(f"cd-{n}", spec, target))


def make_ces_instance(n: int, target: float = NORMALIZATION_TARGET) -> BenchmarkInstance:
    if n < 1:
        raise ValueError("need at least one agent")
    spec = ProductionSpec.ces(np.arange(1, n + 1), CES_R, CES_D)
    return BenchmarkInstance(f"ces-{n}", normalize_scale(spec, target), target)


def brute_force_optimum(spec: ProductionSpec, step: float, counter: OracleCounter | None = None):
    """Best principal utility over the grid {0, step, 2 step, ...}^n with sum(beta) <= 1."""
    n = spec.n
    if n > 3:
        raise ValueError("grid search is limited to n <= 3")
    if not step > 0:
        raise ValueError("grid step must be positive")
    m = int(math.floor(1.0 / step + 1e-9))
    best_beta, best_u = np.zeros(n), 0.0
    if m == 0:
        return best_beta, best_u

    def score(block: np.ndarray):
        nonlocal best_beta, best_u
        u = principal_utility(spec, block, counter)
        j = int(np.argmax(u))
        if u[j] > best_u:
            best_u, best_beta = float(u[j]), block[j].copy()

    ticks = np.arange(m + 1)
    if n == 1:
        score(ticks[:, None] * step)
    elif n == 2:
        i, j = np.meshgrid(ticks, ticks, indexing="ij")
        keep = i + j <= m
        score(np.stack([i[keep], j[keep]], axis=1) * step)
    else:
        i, j = np.meshgrid(ticks, ticks, indexing="ij")
        keep = i + j <= m
        order = np.argsort((i + j)[keep], kind="stable")
        pairs = np.stack([i[keep], j[keep]], axis=1)[order]
        # prefix sizes: number of pairs with i + j <= budget
        counts = np.cumsum(np.bincount((i + j)[keep], minlength=m + 1))
        for first in range(m + 1):
            tail = pairs[: counts[m - first]]
            block = np.empty((tail.shape[0], 3))
            block[:, 0] = first
            block[:, 1:] = tail
            score(block * step)
    return best_beta, best_u


def quasiconcavity_violations(spec: ProductionSpec, samples: int, rng: np.random.Generator) -> int:
    """Count sampled segments where F(lam b + (1-lam) b') < min(F(b), F(b')) beyond tolerance."""
    n = spec.n
    b1 = rng.uniform(0.0, 1.0, (samples, n))
    b2 = rng.uniform(0.0, 1.0, (samples, n))
    lam = rng.uniform(0.0, 1.0, (samples, 1))
    f1, f2 = induced_production(spec, b1), induced_production(spec, b2)
    fm = induced_production(spec, lam * b1 + (1 - lam) * b2)
    low = np.minimum(f1, f2)
    return int(np.sum(fm < low - 1e-9 * (1 + np.abs(low))))


@dataclass(frozen=True)
class SolverSettings:
    ellipsoid_eps: float = 1e-6
    level_eps: float = 1e-2
    pgd_eps: float = 1e-3
    budget: int = ORACLE_BUDGET


def solve_instance(
    inst: BenchmarkInstance,
    method: str,
    settings: SolverSettings = SolverSettings(),
    trace: Callable[[dict], None] | None = None,
) -> SolveReport:
    if method == "ellipsoid":
        state = SearchState(eps=settings.ellipsoid_eps, level_eps=settings.level_eps, budget=settings.budget)
        report = find_contract_ellipsoid(inst.spec, state, trace=trace)
    elif method == "pgd":
        report = find_contract_pgd(inst.spec, PgdConfig(eps=settings.pgd_eps), trace=trace)
    else:
        raise ValueError(f"unknown method {method!r}")
    report.instance_id = inst.id
    if inst.known_utility is not None:
        report.gap = inst.known_utility - report.utility
    return report


def _solve_cell(args):
    inst, method, settings = args
    return solve_instance(inst, method, settings)


def build_suite(suite: str, n_min: int, n_max: int) -> list[BenchmarkInstance]:
    if suite not in ("cd", "ces", "all", "empty"):
        raise ValueError(f"unknown suite {suite!r}")
    out = []
    if suite in ("cd", "all"):
        out += [make_cd_instance(n) for n in range(n_min, n_max + 1)]
    if suite in ("ces", "all"):
        out += [make_ces_instance(n) for n in range(n_min, n_max + 1)]
    return out


def report_rows(reports: list[SolveReport]) -> tuple[list[str], list[list]]:
    width = max((len(r.contract) for r in reports), default=0)
    header = CSV_COLUMNS + [f"beta_{i}" for i in range(1, width + 1)]
    rows = []
    for r in reports:
        d = r.to_dict()
        row = [
            d["id"], d["method"], d["n"], repr(d["eps"]), repr(d["utility"]),
            "" if d["gap"] is None else repr(d["gap"]), repr(d["sum_beta"]),
            d["induced_evals"], d["induced_grad_evals"], f"{d['wall_ms']:.1f}", int(d["truncated"]),
        ]
        row += [repr(b) for b in d["beta"]] + [""] * (width - len(d["beta"]))
        rows.append(row)
    return header, rows


def write_reports(reports: list[SolveReport], out_dir: str, meta: dict) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    json_path = os.path.join(out_dir, "report.json")
    header, rows = report_rows(reports)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    with open(json_path, "w") as fh:
        json.dump({**meta, "rows": [r.to_dict() for r in reports]}, fh, indent=2)
    return csv_path, json_path


def run_benchmark(
    suite: str,
    out_dir: str,
    n_min: int = 2,
    n_max: int = 6,
    methods: tuple[str, ...] = ("ellipsoid", "pgd"),
    settings: SolverSettings = SolverSettings(),
    gap_threshold: float = GAP_THRESHOLD,
    seed: int = DEFAULT_SEED,
    qc_samples: int = 10_000,
    jobs: int = 1,
    instances: list[BenchmarkInstance] | None = None,
    log: Callable[[str], None] | None = None,
) -> int:
    """Run every instance x method cell and write report.csv / report.json.

    Returns 0 on success and 1 if a Cobb-Douglas gap exceeds ``gap_threshold``
    or a run exceeds the oracle budget.
    """
    insts = build_suite(suite, n_min, n_max) if instances is None else instances
    cells = [(inst, m, settings) for inst in insts for m in methods]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_solve_cell, cells))
    else:
        reports = [_solve_cell(c) for c in cells]

    rng = np.random.default_rng(seed)
    checks = {}
    for inst in insts:
        checks[inst.id] = {
            "condition": check_separable_condition(inst.spec).status,
            "quasiconcavity_violations": quasiconcavity_violations(inst.spec, qc_samples, rng) if qc_samples else None,
            "scale": inst.spec.scale,
            "known_utility": inst.known_utility,
        }

    failures = []
    for r in reports:
        if r.gap is not None and r.gap > gap_threshold:
            failures.append(f"{r.instance_id}/{r.method}: gap {r.gap:.3e} > {gap_threshold:g}")
        if r.oracle_calls > settings.budget:
            failures.append(f"{r.instance_id}/{r.method}: {r.oracle_calls} oracle calls > {settings.budget}")
        if log:
            gap = "" if r.gap is None else f" gap={r.gap:.2e}"
            log(f"{r.instance_id:>8} {r.method:>9} utility={r.utility:.8f}{gap} calls={r.oracle_calls} {r.wall_ms / 1e3:.1f}s")

    meta = {
        "suite": suite,
        "seed": seed,
        "settings": {
            "ellipsoid_eps": settings.ellipsoid_eps,
            "level_eps": settings.level_eps,
            "pgd_eps": settings.pgd_eps,
            "budget": settings.budget,
            "gap_threshold": gap_threshold,
        },
        "instances": [inst.to_dict() for inst in insts],
        "checks": checks,
        "failures": failures,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    write_reports(reports, out_dir, meta)
    if log:
        for f in failures:
            log(f"FAIL {f}")
    return 1 if failures else 0
