"""Optimal linear profit-sharing contracts for team production."""
from .ellipsoid import Ellipsoid, SearchState, ellipsoid_cut, find_contract_ellipsoid, min_share, separation_step
from .equilibrium import (
    EquilibriumError,
    EquilibriumResult,
    OracleCounter,
    cd_optimal_contract,
    induced_gradient,
    induced_production,
    principal_utility,
    solve_equilibrium,
)
from .pgd import PgdConfig, find_contract_pgd, max_prod, project_capped_simplex
from .production import (
    ConditionVerdict,
    Primitive,
    ProductionSpec,
    check_separable_condition,
    eval_gradient,
    eval_production,
)
from .report import SolveReport

__version__ = "0.1.0"
