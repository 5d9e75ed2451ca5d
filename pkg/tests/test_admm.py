import dataclasses

import numpy as np
import pytest

from windclear.admm import (
    AggregatorToIso,
    AggregatorWorker,
    IsoProblem,
    IsoToAggregator,
    aggregator_subproblem,
    dual_update,
    primal_residual,
    solve_admm,
)
from windclear.clearing import ClearingConfig, solve_centralized
from windclear.errors import SolverError
from windclear.grid import Aggregator, Appliance
from windclear.risk import RiskConfig

from util import random_small_case, tiny_case, tiny_prices, tiny_scenarios


def test_dual_update_worked_example():
    # One aggregator-slot: multiplier 1, rho 35, mismatch 0.1 -> 4.5.
    out = dual_update(np.array([1.0]), np.array([0.6]), np.array([0.5]), rho=35.0)
    np.testing.assert_allclose(out, [4.5])


def test_primal_residual_is_euclidean():
    # gaps of 3 and 4 across two slots -> 5
    assert primal_residual(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(5.0)
    assert primal_residual(np.zeros((4, 2)), np.zeros((4, 2))) == 0.0


def test_messages_are_frozen():
    msg = IsoToAggregator(multipliers=np.zeros(2), target=np.zeros(2))
    with pytest.raises(dataclasses.FrozenInstanceError):
        msg.target = np.ones(2)
    reply = AggregatorToIso(consumption=np.zeros(2))
    with pytest.raises(dataclasses.FrozenInstanceError):
        reply.consumption = np.ones(2)


def _walk_objects(root):
    """Reachable python objects through __dict__ and plain containers."""
    seen = set()
    stack = [root]
    while stack:
        obj = stack.pop()
        if id(obj) in seen or isinstance(obj, (str, bytes, int, float, bool, type(None))):
            continue
        seen.add(id(obj))
        yield obj
        if isinstance(obj, dict):
            stack.extend(obj.keys())
            stack.extend(obj.values())
        elif isinstance(obj, (list, tuple, set, frozenset)):
            stack.extend(obj)
        elif hasattr(obj, "__dict__"):
            stack.extend(vars(obj).values())


def test_coordinator_never_holds_appliance_data():
    case = tiny_case()
    prices = tiny_prices(case)
    scen = tiny_scenarios(case, n=5)
    iso = IsoProblem(case, prices, scen, RiskConfig(), rho=35.0)
    assert case.all_appliances(), "case under test must actually carry appliances"
    reachable = list(_walk_objects(iso))
    assert not any(isinstance(o, Appliance) for o in reachable)
    # and the coordinator's QP has no appliance columns either
    assert not iso._assembled.layout.appliance_owners


def test_zero_appliance_case_converges_in_one_iteration():
    case = tiny_case()
    case.aggregators[0] = Aggregator(bus=2, p_dra_max=8.0, appliances=[])
    sol = solve_admm(case, tiny_prices(case), tiny_scenarios(case, n=5))
    assert sol.status == "converged"
    assert sol.iterations == 1
    assert sol.trace[0].primal_residual <= 1e-12
    np.testing.assert_allclose(sol.p_dra, 0.0, atol=1e-7)


def test_worker_reports_aggregate_consumption_only():
    case = tiny_case()
    agg = case.aggregators[0]
    worker = AggregatorWorker(0, agg, case.horizon, rho=35.0)
    reply = worker.solve(IsoToAggregator(multipliers=np.zeros(case.horizon),
                                         target=np.full(case.horizon, 2.0)))
    assert isinstance(reply, AggregatorToIso)
    assert set(dataclasses.asdict(reply)) == {"consumption"}
    total = sum(worker.schedules().values())
    np.testing.assert_allclose(reply.consumption, total, atol=1e-10)


def test_worker_solution_matches_reference_qp():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(8)
    horizon, rho = 5, 20.0
    agg = Aggregator(bus=1, p_dra_max=50.0, appliances=[
        Appliance(owner=(1, 1, 1), energy_total=4.0, p_min=0.0, p_max=2.0,
                  t_start=1, t_end=4, utility_curvature=0.7, utility_slope=3.0),
        Appliance(owner=(1, 2, 1), energy_total=3.0, p_min=0.0, p_max=1.5,
                  t_start=2, t_end=5, utility_curvature=0.3, utility_slope=1.0),
    ])
    mult = rng.normal(0.0, 5.0, horizon)
    target = rng.uniform(0.0, 3.0, horizon)
    schedules, reply = aggregator_subproblem(agg, horizon, rho, mult, target)

    q1 = cp.Variable(4)  # slots 1..4
    q2 = cp.Variable(4)  # slots 2..5
    total = cp.hstack([q1[0], q1[1] + q2[0], q1[2] + q2[1], q1[3] + q2[2], q2[3]])
    utility = cp.sum(-0.5 * 0.7 * cp.square(q1) + 3.0 * q1) + cp.sum(
        -0.5 * 0.3 * cp.square(q2) + 1.0 * q2
    )
    objective = -utility - mult @ total + 0.5 * rho * cp.sum_squares(total - target)
    prob = cp.Problem(cp.Minimize(objective), [
        q1 >= 0, q1 <= 2.0, cp.sum(q1) == 4.0,
        q2 >= 0, q2 <= 1.5, cp.sum(q2) == 3.0,
    ])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11)
    np.testing.assert_allclose(schedules[(1, 1, 1)][:4], q1.value, atol=1e-6)
    np.testing.assert_allclose(schedules[(1, 2, 1)][1:], q2.value, atol=1e-6)
    np.testing.assert_allclose(reply.consumption, total.value, atol=1e-6)


def test_split_solve_matches_central_on_small_case():
    case, prices, scen = random_small_case(seed=13)
    config = ClearingConfig(mode="admm")
    central = solve_centralized(case, prices, scen)
    split = solve_admm(case, prices, scen, config)
    assert split.status == "converged"
    gap = abs(split.objective - central.objective)
    assert gap <= 1e-3 * (1.0 + abs(central.objective))
    # converged coupling: cleared quantity equals the members' sum
    consumption = np.zeros_like(split.p_dra)
    for owner, p in split.schedules.items():
        consumption[:, owner[0] - 1] += p
    assert primal_residual(split.p_dra, consumption) <= config.eps_primal


def test_strongly_convex_instance_matches_primal_dispatch():
    # a tight coupling residual is needed before the unique primal
    # optimum is pinned down, not just the objective value
    case, prices, scen = random_small_case(seed=29, strongly_convex=True)
    central = solve_centralized(case, prices, scen)
    split = solve_admm(case, prices, scen,
                       ClearingConfig(mode="admm", eps_primal=1e-7, max_admm_iter=3000))
    assert split.status == "converged"
    np.testing.assert_allclose(split.p_gen, central.p_gen, atol=1e-3)
    np.testing.assert_allclose(split.p_wind, central.p_wind, atol=1e-3)
    np.testing.assert_allclose(split.p_dra, central.p_dra, atol=1e-3)
    for owner, p in central.schedules.items():
        np.testing.assert_allclose(split.schedules[owner], p, atol=1e-3)


def test_max_iter_returns_best_iterate_with_flag():
    case, prices, scen = random_small_case(seed=13)
    sol = solve_admm(case, prices, scen, ClearingConfig(mode="admm", max_admm_iter=2))
    assert sol.status == "max_iter"
    assert sol.iterations == 2 and len(sol.trace) == 2
    assert sol.p_gen.shape == (case.horizon, case.n_gen)


def test_subproblem_failure_reports_iteration():
    case = tiny_case()
    case.generators[0].p_max = 1.0  # load 16 MW cannot be met
    with pytest.raises(SolverError, match="iteration 1"):
        solve_admm(case, tiny_prices(case), tiny_scenarios(case, n=4))


def test_thread_count_does_not_change_iterates():
    case, prices, scen = random_small_case(seed=41)
    one = solve_admm(case, prices, scen, ClearingConfig(mode="admm", threads=1))
    two = solve_admm(case, prices, scen, ClearingConfig(mode="admm", threads=3))
    assert one.iterations == two.iterations
    np.testing.assert_array_equal(one.p_dra, two.p_dra)
    np.testing.assert_array_equal(one.lmps, two.lmps)
    for a, b in zip(one.trace, two.trace):
        assert a.objective == b.objective and a.primal_residual == b.primal_residual
