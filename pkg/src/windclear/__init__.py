"""Stochastic day-ahead market clearing for networks with wind and flexible demand.

The package clears a multi-slot DC network market that co-optimizes
conventional generation, committed wind, and aggregated flexible
demand, pricing wind deviation risk through a tail-average (CVaR)
charge over sampled scenarios.  The same problem solves either as one
quadratic program or as a split between the operator and the demand
aggregators that exchanges only prices and bus-level totals.
"""

__version__ = "0.1.0"

from .admm import solve_admm
from .clearing import (
    MODE_ADMM,
    MODE_CENTRAL,
    ClearingConfig,
    DispatchSolution,
    solve_centralized,
    solve_clearing,
)
from .errors import (
    ConvexityError,
    DigestMismatchError,
    SchemaError,
    SolverError,
    ValidationError,
    WindclearError,
)
from .evaluation import ALL_POLICIES, CostDistribution, PolicySpec, evaluate_policy, sweep_mu
from .fileio import (
    load_case,
    load_prices,
    load_scenarios,
    load_solution,
    save_case,
    save_prices,
    save_scenarios,
    save_solution,
)
from .grid import (
    Aggregator,
    Appliance,
    Bus,
    Generator,
    Line,
    NetworkCase,
    WindFarm,
    build_flow_matrices,
    validate_case,
)
from .risk import PriceSchedule, RiskConfig, empirical_var_cvar, transaction_cost
from .scenarios import ScenarioSet, default_sigma, generate_scenarios
from .settlement import SettlementReport, settle
from .wecc6 import build_bundle, build_case, build_forecast, build_prices

__all__ = [
    "__version__",
    "MODE_ADMM",
    "MODE_CENTRAL",
    "ClearingConfig",
    "DispatchSolution",
    "solve_clearing",
    "solve_centralized",
    "solve_admm",
    "WindclearError",
    "ValidationError",
    "ConvexityError",
    "SchemaError",
    "DigestMismatchError",
    "SolverError",
    "ALL_POLICIES",
    "CostDistribution",
    "PolicySpec",
    "evaluate_policy",
    "sweep_mu",
    "load_case",
    "save_case",
    "load_prices",
    "save_prices",
    "load_scenarios",
    "save_scenarios",
    "load_solution",
    "save_solution",
    "Bus",
    "Line",
    "Generator",
    "WindFarm",
    "Appliance",
    "Aggregator",
    "NetworkCase",
    "build_flow_matrices",
    "validate_case",
    "PriceSchedule",
    "RiskConfig",
    "transaction_cost",
    "empirical_var_cvar",
    "ScenarioSet",
    "default_sigma",
    "generate_scenarios",
    "SettlementReport",
    "settle",
    "build_bundle",
    "build_case",
    "build_forecast",
    "build_prices",
]
