"""Shared builders and reference solvers for the test suite.

The reference solvers here are deliberately independent of the
package's own assembly code: they restate the clearing model in cvxpy
from the case data alone, so agreement is evidence rather than
tautology.
"""
from __future__ import annotations

import numpy as np

from windclear.grid import (
    Aggregator,
    Appliance,
    Bus,
    Generator,
    Line,
    NetworkCase,
    WindFarm,
    build_flow_matrices,
)
from windclear.risk import PriceSchedule
from windclear.scenarios import generate_scenarios


def tiny_case(horizon=2, wind_cap=5.0, agg_cap=8.0, gamma=0.0, slope=0.0):
    """Two buses, one line, one generator, one wind farm, one aggregator."""
    buses = [
        Bus(id=1, base_load=np.full(horizon, 10.0)),
        Bus(id=2, base_load=np.full(horizon, 6.0)),
    ]
    lines = [Line(from_bus=1, to_bus=2, reactance_pu=0.2)]
    gens = [
        Generator(bus=1, cost_a=0.05, cost_b=20.0, p_min=0.0, p_max=60.0,
                  ramp_up=60.0, ramp_down=60.0),
    ]
    farms = [WindFarm(bus=2, p_commit_max=np.full(horizon, wind_cap))]
    appl = Appliance(
        owner=(1, 1, 1), energy_total=4.0, p_min=0.0, p_max=3.0,
        t_start=1, t_end=horizon, utility_curvature=gamma, utility_slope=slope,
    )
    aggs = [Aggregator(bus=2, p_dra_max=agg_cap, appliances=[appl])]
    return NetworkCase(horizon=horizon, mva_base=100.0, buses=buses, lines=lines,
                       generators=gens, wind_farms=farms, aggregators=aggs)


def tiny_prices(case, purchase=25.0, sell=20.0):
    shape = (case.horizon, case.n_wind)
    return PriceSchedule(purchase=np.full(shape, purchase), sell=np.full(shape, sell))


def tiny_scenarios(case, n=8, seed=3, sigma=1.5):
    forecast = np.full((case.horizon, case.n_wind), 3.0)
    return generate_scenarios(forecast, sigma, n, seed)


def random_small_case(seed, strongly_convex=False):
    """Random feasible instance: 2-5 buses, 1-3 aggregators, short horizon.

    Loads are sized against generator capacity and appliance windows
    against charger ratings, so every draw is feasible by construction.
    Returns (case, prices, scenarios) with N_s <= 20.
    """
    rng = np.random.default_rng(seed)
    horizon = int(rng.integers(3, 7))
    n_bus = int(rng.integers(2, 6))
    n_gen = int(rng.integers(1, min(n_bus, 3) + 1))
    n_wind = int(rng.integers(1, 3))
    n_agg = int(rng.integers(1, 4))

    # Spanning tree plus an optional chord keeps the network connected.
    lines = []
    for b in range(2, n_bus + 1):
        lines.append(Line(from_bus=int(rng.integers(1, b)), to_bus=b,
                          reactance_pu=float(rng.uniform(0.1, 0.5))))
    if n_bus > 2 and rng.random() < 0.5:
        a, b = rng.choice(np.arange(1, n_bus + 1), size=2, replace=False)
        lines.append(Line(from_bus=int(a), to_bus=int(b),
                          reactance_pu=float(rng.uniform(0.1, 0.5))))

    gens = []
    for _ in range(n_gen):
        cost_a = float(rng.uniform(0.05, 0.4)) if strongly_convex else \
            float(rng.choice([0.0, rng.uniform(0.05, 0.4)]))
        gens.append(Generator(
            bus=int(rng.integers(1, n_bus + 1)),
            cost_a=cost_a,
            cost_b=float(rng.uniform(15.0, 60.0)),
            p_min=0.0,
            p_max=float(rng.uniform(60.0, 120.0)),
            ramp_up=200.0, ramp_down=200.0,
        ))
    capacity = sum(g.p_max for g in gens)

    farms = [
        WindFarm(bus=int(rng.integers(1, n_bus + 1)),
                 p_commit_max=rng.uniform(3.0, 10.0, horizon))
        for _ in range(n_wind)
    ]

    aggs = []
    for j in range(n_agg):
        appliances = []
        for user in range(1, int(rng.integers(1, 4)) + 1):
            t_start = int(rng.integers(1, horizon))
            t_end = int(rng.integers(t_start + 1, horizon + 1))
            p_max = float(rng.uniform(1.0, 3.0))
            energy = float(rng.uniform(0.3, 0.9) * p_max * (t_end - t_start + 1))
            appliances.append(Appliance(
                owner=(j + 1, user, 1), energy_total=energy, p_min=0.0, p_max=p_max,
                t_start=t_start, t_end=t_end,
                utility_curvature=float(rng.uniform(0.5, 2.0)) if strongly_convex else 0.0,
                utility_slope=float(rng.uniform(0.0, 5.0)) if strongly_convex else 0.0,
            ))
        aggs.append(Aggregator(bus=int(rng.integers(1, n_bus + 1)), p_dra_max=30.0,
                               appliances=appliances))

    # Base load safely inside dispatchable capacity net of flexible demand.
    shares = rng.dirichlet(np.ones(n_bus))
    total = rng.uniform(0.3, 0.6, horizon) * capacity
    buses = [Bus(id=b + 1, base_load=shares[b] * total) for b in range(n_bus)]

    case = NetworkCase(horizon=horizon, mva_base=100.0, buses=buses, lines=lines,
                       generators=gens, wind_farms=farms, aggregators=aggs)
    purchase = rng.uniform(20.0, 45.0, (horizon, n_wind))
    prices = PriceSchedule(purchase=purchase, sell=rng.uniform(0.5, 0.95) * purchase)
    forecast = np.stack([0.6 * f.p_commit_max for f in farms], axis=1)
    scenarios = generate_scenarios(forecast, 1.0, int(rng.integers(5, 21)), seed + 1000)
    return case, prices, scenarios


def cvxpy_clearing_objective(case, prices, scenarios, beta, mu):
    """Independent restatement of the full stochastic clearing problem."""
    import cvxpy as cp

    T, ng, nw, na, nb = (case.horizon, case.n_gen, case.n_wind, case.n_agg, case.n_bus)
    ns = scenarios.n_samples
    flows = build_flow_matrices(case)

    p_g = cp.Variable((T, ng))
    p_w = cp.Variable((T, nw))
    p_a = cp.Variable((T, na))
    th = cp.Variable((T, nb))
    eta = cp.Variable()
    u = cp.Variable(ns)

    a = np.array([g.cost_a for g in case.generators])
    b = np.array([g.cost_b for g in case.generators])
    cost = cp.sum(cp.multiply(a[None, :], cp.square(p_g))) + cp.sum(
        cp.multiply(b[None, :], p_g)
    )

    cons = [
        p_g @ flows.gen_incidence.T + p_w @ flows.wind_incidence.T
        - p_a @ flows.aggregator_incidence.T
        - case.mva_base * th @ flows.nodal_susceptance.T
        == case.base_load_matrix(),
        th[:, 0] == 0,
        p_w >= 0,
        p_w <= np.stack([f.p_commit_max for f in case.wind_farms], axis=1),
        p_a >= 0,
        p_a <= np.array([g.p_dra_max for g in case.aggregators])[None, :],
        u >= 0,
    ]
    for i, g in enumerate(case.generators):
        cons += [p_g[:, i] >= g.p_min, p_g[:, i] <= g.p_max]
        prev = g.p_initial if g.p_initial is not None else g.p_min
        cons += [
            p_g[0, i] - prev <= g.ramp_up,
            prev - p_g[0, i] <= g.ramp_down,
        ]
        if T > 1:
            cons += [
                cp.diff(p_g[:, i]) <= g.ramp_up,
                -cp.diff(p_g[:, i]) <= g.ramp_down,
            ]

    utility = 0
    schedule_terms = []
    for j, agg in enumerate(case.aggregators):
        member_sum = 0
        for ap in agg.appliances:
            sl = np.arange(ap.t_start - 1, ap.t_end)
            q = cp.Variable(sl.size)
            cons += [q >= ap.p_min, q <= ap.p_max, cp.sum(q) == ap.energy_total]
            full = np.zeros((T, sl.size))
            full[sl, np.arange(sl.size)] = 1.0
            member_sum = member_sum + full @ q
            utility = utility + cp.sum(
                -0.5 * ap.utility_curvature * cp.square(q) + ap.utility_slope * q
            )
            schedule_terms.append(q)
        cons.append(p_a[:, j] == member_sum)

    for s in range(ns):
        tc = cp.sum(
            cp.multiply(prices.half_spread, cp.abs(p_w - scenarios.samples[s]))
            + cp.multiply(prices.midpoint, p_w - scenarios.samples[s])
        )
        cons.append(tc - eta <= u[s])

    risk = eta + cp.sum(u) / (ns * (1.0 - beta))
    prob = cp.Problem(cp.Minimize(cost - utility + mu * risk), cons)
    prob.solve(solver=cp.CLARABEL, tol_feas=1e-11, tol_gap_abs=1e-11, tol_gap_rel=1e-11)
    assert prob.status == "optimal", prob.status
    return float(prob.value)


def cvxpy_deterministic_objective(case, prices, forecast, mu):
    """Deterministic dispatch oracle: wind deviation priced linearly.

    Matches the degenerate limit (a single zero-variance scenario with
    equal purchase and sell prices), where the risk tail collapses to
    mu * b * (p_wind - forecast).
    """
    import cvxpy as cp

    T, ng, nw, na, nb = (case.horizon, case.n_gen, case.n_wind, case.n_agg, case.n_bus)
    flows = build_flow_matrices(case)

    p_g = cp.Variable((T, ng))
    p_w = cp.Variable((T, nw))
    p_a = cp.Variable((T, na))
    th = cp.Variable((T, nb))

    a = np.array([g.cost_a for g in case.generators])
    b = np.array([g.cost_b for g in case.generators])
    cost = cp.sum(cp.multiply(a[None, :], cp.square(p_g))) + cp.sum(
        cp.multiply(b[None, :], p_g)
    )
    cons = [
        p_g @ flows.gen_incidence.T + p_w @ flows.wind_incidence.T
        - p_a @ flows.aggregator_incidence.T
        - case.mva_base * th @ flows.nodal_susceptance.T
        == case.base_load_matrix(),
        th[:, 0] == 0,
        p_w >= 0,
        p_w <= np.stack([f.p_commit_max for f in case.wind_farms], axis=1),
        p_a >= 0,
        p_a <= np.array([g.p_dra_max for g in case.aggregators])[None, :],
    ]
    for i, g in enumerate(case.generators):
        cons += [p_g[:, i] >= g.p_min, p_g[:, i] <= g.p_max]
        prev = g.p_initial if g.p_initial is not None else g.p_min
        cons += [
            p_g[0, i] - prev <= g.ramp_up,
            prev - p_g[0, i] <= g.ramp_down,
        ]
        if T > 1:
            cons += [
                cp.diff(p_g[:, i]) <= g.ramp_up,
                -cp.diff(p_g[:, i]) <= g.ramp_down,
            ]

    utility = 0
    for j, agg in enumerate(case.aggregators):
        member_sum = 0
        for ap in agg.appliances:
            sl = np.arange(ap.t_start - 1, ap.t_end)
            q = cp.Variable(sl.size)
            cons += [q >= ap.p_min, q <= ap.p_max, cp.sum(q) == ap.energy_total]
            full = np.zeros((T, sl.size))
            full[sl, np.arange(sl.size)] = 1.0
            member_sum = member_sum + full @ q
            utility = utility + cp.sum(
                -0.5 * ap.utility_curvature * cp.square(q) + ap.utility_slope * q
            )
        cons.append(p_a[:, j] == member_sum)

    risk = cp.sum(cp.multiply(prices.purchase, p_w - forecast))
    prob = cp.Problem(cp.Minimize(cost - utility + mu * risk), cons)
    prob.solve(solver=cp.CLARABEL, tol_feas=1e-12, tol_gap_abs=1e-12, tol_gap_rel=1e-12)
    assert prob.status == "optimal", prob.status
    return float(prob.value)
