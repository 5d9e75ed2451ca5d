"""Day-ahead clearing: configuration, solution container, central solve.

The clearing problem minimizes social cost (generation cost minus
consumption utility) plus mu times the sample-average CVaR of the
wind transaction cost, over generator schedules, wind commitments,
demand-response consumption, and bus angles, subject to DC network
physics.  ``solve_centralized`` hands the whole thing to the QP
engine; the decomposed solve lives in :mod:`windclear.admm` and
returns the same :class:`DispatchSolution` type.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assemble import assemble_clearing, extract_prices, extract_primal
from .errors import ConvexityError, SolverError
from .grid import validate_case
from .qp import STATUS_OPTIMAL, solve_qp
from .risk import RiskConfig, check_convexity_condition

MODE_CENTRAL = "central"
MODE_ADMM = "admm"


@dataclass
class ClearingConfig:
    """Knobs for one clearing run."""

    risk: RiskConfig = field(default_factory=RiskConfig)
    mode: str = MODE_CENTRAL
    rho: float = 35.0           # proximal weight of the decomposed solve
    eps_primal: float = 1e-4    # consumption-mismatch stopping threshold, MW
    max_admm_iter: int = 200
    qp_tol: float = 1e-8
    qp_max_iter: int = 50_000
    threads: int = 1

    def __post_init__(self):
        if self.mode not in (MODE_CENTRAL, MODE_ADMM):
            raise ValueError(f"mode must be '{MODE_CENTRAL}' or '{MODE_ADMM}', got {self.mode!r}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.eps_primal > 0:
            raise ValueError(f"eps_primal must be positive, got {self.eps_primal}")
        if self.max_admm_iter < 1:
            raise ValueError("max_admm_iter must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class TraceRow:
    """One iteration of a solve: objective and coupling mismatch."""

    iteration: int
    objective: float
    primal_residual: float
    wall_ms: float


@dataclass
class DispatchSolution:
    """Cleared quantities, prices, and solve diagnostics.

    All prices are price-signed: ``lmps[t, n]`` is the marginal social
    cost of one extra MW of load at bus n in slot t, and
    ``dra_prices[t, j]`` is the price the aggregator at column j faces,
    equal to its bus LMP whenever its headroom bounds are slack.
    ``var_estimate`` and ``tail_excess`` are the value-at-risk variable
    and the per-scenario excesses of the risk tail (None for
    deterministic solves).
    """

    mode: str
    status: str
    objective: float
    p_gen: np.ndarray           # [T, N_gen] MW
    p_wind: np.ndarray          # [T, N_wind] MW
    p_dra: np.ndarray           # [T, N_agg] MW
    theta: np.ndarray           # [T, N_bus] rad
    schedules: dict             # owner tuple -> [T] MW
    lmps: np.ndarray            # [T, N_bus] $/MWh
    dra_prices: np.ndarray      # [T, N_agg] $/MWh
    var_estimate: float | None
    tail_excess: np.ndarray | None
    iterations: int
    trace: list
    kkt: object                 # KktResiduals of the final QP solve


def generation_cost(case, p_gen):
    """Total quadratic generation cost in $ for a [T, N_gen] schedule."""
    p = np.asarray(p_gen, dtype=float)
    a = np.array([g.cost_a for g in case.generators])
    b = np.array([g.cost_b for g in case.generators])
    return float(np.sum(a * p * p + b * p))


def consumption_utility(case, schedules):
    """Total appliance utility in $ for owner-keyed schedules."""
    total = 0.0
    for agg in case.aggregators:
        for a in agg.appliances:
            p = np.asarray(schedules[a.owner], dtype=float)
            total += float(np.sum(-0.5 * a.utility_curvature * p * p + a.utility_slope * p))
    return total


def risk_term_value(solution, config):
    """eta + sum(u) / (N_s (1 - beta)) at the cleared point, in $."""
    if solution.var_estimate is None:
        return 0.0
    u = solution.tail_excess
    return float(
        solution.var_estimate
        + np.sum(u) / (u.size * (1.0 - config.risk.beta))
    )


def check_inputs(case, prices, scenarios):
    """Shared pre-solve guards: case invariants, convexity, dimensions."""
    validate_case(case)
    if not check_convexity_condition(prices):
        raise ConvexityError(
            "sell price exceeds purchase price somewhere; transaction cost "
            "would be concave in the commitment"
        )
    if (prices.horizon, prices.n_wind) != (case.horizon, case.n_wind):
        raise ValueError(
            f"price schedule {prices.purchase.shape} does not match case "
            f"horizon {case.horizon} with {case.n_wind} wind farms"
        )
    if (scenarios.horizon, scenarios.n_wind) != (case.horizon, case.n_wind):
        raise ValueError(
            f"scenario set {scenarios.samples.shape} does not match case "
            f"horizon {case.horizon} with {case.n_wind} wind farms"
        )


def solve_centralized(case, prices, scenarios, config=None):
    """Solve the full clearing problem as one QP.

    Returns a :class:`DispatchSolution` with certified KKT residuals;
    raises SolverError when the instance is infeasible, unbounded, or
    the engine cannot reach the requested accuracy.
    """
    config = config or ClearingConfig()
    check_inputs(case, prices, scenarios)

    start = time.perf_counter()
    assembled = assemble_clearing(case, prices, scenarios, config.risk)
    sol = solve_qp(assembled.qp, tol=config.qp_tol, max_iter=config.qp_max_iter)
    if sol.status != STATUS_OPTIMAL:
        raise SolverError(f"clearing QP finished with status {sol.status}")

    parts = extract_primal(assembled.layout, sol.x)
    lmps, dra_prices = extract_prices(assembled.layout, sol.duals_eq)
    wall_ms = 1e3 * (time.perf_counter() - start)
    return DispatchSolution(
        mode=MODE_CENTRAL,
        status="optimal",
        objective=sol.objective,
        p_gen=parts["p_gen"],
        p_wind=parts["p_wind"],
        p_dra=parts["p_dra"],
        theta=parts["theta"],
        schedules=parts["schedules"],
        lmps=lmps,
        dra_prices=dra_prices,
        var_estimate=parts["var_estimate"],
        tail_excess=parts["tail_excess"],
        iterations=1,
        trace=[TraceRow(1, sol.objective, 0.0, wall_ms)],
        kkt=sol.kkt,
    )


def solve_clearing(case, prices, scenarios, config=None):
    """Dispatch on ``config.mode`` between the two solve paths."""
    config = config or ClearingConfig()
    if config.mode == MODE_CENTRAL:
        return solve_centralized(case, prices, scenarios, config)
    from .admm import solve_admm

    return solve_admm(case, prices, scenarios, config)
