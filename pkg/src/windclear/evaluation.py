"""Out-of-sample policy evaluation and the risk-weight sweep.

A commitment policy fixes day-ahead quantities; its realized cost on
one wind draw w is the dispatch cost (generation minus utility, both
fixed day-ahead) plus the wind transaction cost T(p_wind, w).  Three
policies are compared:

- ``cvar``: the risk-aware clearing solution;
- ``expected_wind``: wind committed at the forecast, cleared
  deterministically with no risk term;
- ``no_wind``: no wind commitment at all.  Per the market rules
  modeled here an uncommitted farm does not transact, so this
  baseline's evaluated cost carries no wind term at all and its cost
  distribution is a point mass.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assemble import assemble_clearing, extract_prices, extract_primal
from .clearing import (
    MODE_CENTRAL,
    ClearingConfig,
    DispatchSolution,
    TraceRow,
    consumption_utility,
    generation_cost,
    risk_term_value,
    solve_clearing,
)
from .errors import SolverError
from .grid import validate_case
from .qp import STATUS_OPTIMAL, solve_qp
from .risk import empirical_var_cvar, transaction_cost_batch

POLICY_CVAR = "cvar"
POLICY_EXPECTED_WIND = "expected_wind"
POLICY_NO_WIND = "no_wind"
ALL_POLICIES = (POLICY_CVAR, POLICY_EXPECTED_WIND, POLICY_NO_WIND)


@dataclass
class PolicySpec:
    """Which day-ahead commitment rule to evaluate."""

    kind: str

    def __post_init__(self):
        if self.kind not in ALL_POLICIES:
            raise ValueError(f"unknown policy {self.kind!r}, expected one of {ALL_POLICIES}")


@dataclass
class CostDistribution:
    """Realized total cost across evaluation draws, in $."""

    policy: str
    samples: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.samples))

    @property
    def std(self):
        return float(np.std(self.samples))

    def cdf(self):
        """Empirical CDF grid: (sorted costs, cumulative probabilities)."""
        x = np.sort(self.samples)
        return x, np.arange(1, x.size + 1) / x.size

    def var_cvar(self, beta):
        return empirical_var_cvar(self.samples, beta)


def solve_pinned(case, pin_wind, config=None):
    """Deterministic clearing with the wind commitment fixed.

    Used by the baseline policies: same network, ramp, and scheduling
    constraints, no transaction-cost tail.
    """
    config = config or ClearingConfig()
    validate_case(case)
    assembled = assemble_clearing(case, pin_wind=pin_wind)
    sol = solve_qp(assembled.qp, tol=config.qp_tol, max_iter=config.qp_max_iter)
    if sol.status != STATUS_OPTIMAL:
        raise SolverError(f"pinned clearing QP finished with status {sol.status}")
    parts = extract_primal(assembled.layout, sol.x)
    lmps, dra_prices = extract_prices(assembled.layout, sol.duals_eq)
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
        var_estimate=None,
        tail_excess=None,
        iterations=1,
        trace=[TraceRow(1, sol.objective, 0.0, 0.0)],
        kkt=sol.kkt,
    )


def solve_policy(policy, case, prices, scenarios, config=None):
    """Produce the day-ahead dispatch a policy commits to.

    ``scenarios`` supplies both the SAA samples (cvar policy) and the
    forecast (baselines).
    """
    config = config or ClearingConfig()
    if policy.kind == POLICY_CVAR:
        return solve_clearing(case, prices, scenarios, config)
    if policy.kind == POLICY_EXPECTED_WIND:
        return solve_pinned(case, scenarios.forecast, config)
    return solve_pinned(case, np.zeros_like(scenarios.forecast), config)


def evaluate_policy(policy, case, prices, eval_scenarios, dispatch=None, config=None):
    """Monte Carlo cost distribution of a policy's dispatch.

    Parameters
    ----------
    policy : PolicySpec
    case : NetworkCase
    prices : PriceSchedule
    eval_scenarios : ScenarioSet
        Out-of-sample draws; use far more than the SAA set.
    dispatch : DispatchSolution, optional
        The policy's dispatch if already solved.  Required for the
        cvar policy (its SAA scenario set is not reconstructible
        here); baselines are solved on the fly from the evaluation
        forecast.
    config : ClearingConfig, optional

    Returns
    -------
    CostDistribution
    """
    if dispatch is None:
        if policy.kind == POLICY_CVAR:
            raise ValueError("cvar policy evaluation needs the cleared dispatch")
        dispatch = solve_policy(policy, case, prices, eval_scenarios, config)
    fixed = generation_cost(case, dispatch.p_gen) - consumption_utility(case, dispatch.schedules)
    n = eval_scenarios.n_samples
    if policy.kind == POLICY_NO_WIND:
        costs = np.full(n, fixed)
    else:
        costs = fixed + transaction_cost_batch(dispatch.p_wind, eval_scenarios.samples, prices)
    return CostDistribution(policy=policy.kind, samples=costs)


@dataclass
class MuSweepRow:
    """One risk-weight setting and the optimum's cost split."""

    mu: float
    generation_cost: float
    utility: float
    risk_term: float
    objective: float


def sweep_mu(case, prices, scenarios, mu_values, config=None):
    """Re-clear the market across risk weights.

    Returns one row per requested mu, in request order.  Social cost
    (generation minus utility) is nondecreasing and the CVaR term
    nonincreasing in mu; the tests assert both.
    """
    base = config or ClearingConfig()
    rows = []
    for mu in mu_values:
        cfg = ClearingConfig(
            risk=type(base.risk)(beta=base.risk.beta, mu=float(mu)),
            mode=base.mode,
            rho=base.rho,
            eps_primal=base.eps_primal,
            max_admm_iter=base.max_admm_iter,
            qp_tol=base.qp_tol,
            qp_max_iter=base.qp_max_iter,
            threads=base.threads,
        )
        sol = solve_clearing(case, prices, scenarios, cfg)
        gen = generation_cost(case, sol.p_gen)
        util = consumption_utility(case, sol.schedules)
        rows.append(
            MuSweepRow(
                mu=float(mu),
                generation_cost=gen,
                utility=util,
                risk_term=risk_term_value(sol, cfg),
                objective=sol.objective,
            )
        )
    return rows
