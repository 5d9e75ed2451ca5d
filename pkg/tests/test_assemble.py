import numpy as np
import pytest

from windclear.assemble import assemble_clearing, extract_prices, extract_primal
from windclear.risk import PriceSchedule, RiskConfig
from windclear.wecc6 import build_bundle

from util import tiny_case, tiny_prices, tiny_scenarios


@pytest.fixture(scope="module")
def bundle():
    return build_bundle(users_per_aggregator=2, n_scenarios=15)


def test_variable_count_formula(bundle):
    case, prices, scenarios = bundle
    assembled = assemble_clearing(case, prices, scenarios, RiskConfig())
    lay = assembled.layout

    T, ns = case.horizon, scenarios.n_samples
    window = sum(a.t_end - a.t_start + 1 for a in case.all_appliances())
    expected = (
        T * (case.n_gen + case.n_wind + case.n_agg + case.n_bus)
        + window
        + 1 + ns
        + ns * T * case.n_wind  # half-spread is nonzero on this schedule
    )
    assert lay.n_vars == expected == assembled.qp.n
    assert lay.has_spread


def test_spread_free_prices_drop_epigraph_block(bundle):
    case, _, scenarios = bundle
    flat = PriceSchedule(purchase=np.full((case.horizon, case.n_wind), 30.0),
                         sell=np.full((case.horizon, case.n_wind), 30.0))
    assembled = assemble_clearing(case, flat, scenarios, RiskConfig())
    lay = assembled.layout
    assert not lay.has_spread
    assert "e" not in lay.var_slices
    window = sum(a.t_end - a.t_start + 1 for a in case.all_appliances())
    assert lay.n_vars == (
        case.horizon * (case.n_gen + case.n_wind + case.n_agg + case.n_bus)
        + window + 1 + scenarios.n_samples
    )


def test_balance_rhs_is_base_load(bundle):
    case, prices, scenarios = bundle
    assembled = assemble_clearing(case, prices, scenarios, RiskConfig())
    rows = assembled.layout.eq_slices["balance"]
    rhs = assembled.qp.b_eq[rows].reshape(case.horizon, case.n_bus)
    np.testing.assert_allclose(rhs, case.base_load_matrix())


def test_energy_rows_match_appliances(bundle):
    case, prices, scenarios = bundle
    assembled = assemble_clearing(case, prices, scenarios, RiskConfig())
    rows = assembled.layout.eq_slices["energy"]
    targets = np.array([a.energy_total for a in case.all_appliances()])
    np.testing.assert_allclose(assembled.qp.b_eq[rows], targets)


def test_coordinator_view_has_no_appliance_structure(bundle):
    case, prices, scenarios = bundle
    assembled = assemble_clearing(case, prices, scenarios, RiskConfig(),
                                  include_appliances=False, prox_rho=35.0)
    lay = assembled.layout
    assert lay.var_slices["appliance"] == slice(lay.var_slices["theta"].stop,
                                                lay.var_slices["theta"].stop)
    assert not lay.appliance_owners
    assert "energy" not in lay.eq_slices or assembled.qp.b_eq[lay.eq_slices["energy"]].size == 0
    assert "agg_balance" not in lay.eq_slices or \
        assembled.qp.b_eq[lay.eq_slices["agg_balance"]].size == 0


def test_with_coupling_rebuilds_only_dra_linear_term(bundle):
    case, prices, scenarios = bundle
    assembled = assemble_clearing(case, prices, scenarios, RiskConfig(),
                                  include_appliances=False, prox_rho=35.0)
    T, na = case.horizon, case.n_agg
    mult = np.arange(T * na, dtype=float).reshape(T, na)
    target = np.ones((T, na))
    qp2 = assembled.with_coupling(mult, target)

    sl = assembled.layout.var_slices["p_dra"]
    np.testing.assert_allclose(qp2.c[sl], mult.ravel() - 35.0 * target.ravel())
    mask = np.ones(qp2.n, dtype=bool)
    mask[sl] = False
    np.testing.assert_array_equal(qp2.c[mask], assembled.qp.c[mask])
    assert (qp2.Q != assembled.qp.Q).nnz == 0
    assert (qp2.A_eq != assembled.qp.A_eq).nnz == 0


def test_with_coupling_requires_prox_assembly(bundle):
    case, prices, scenarios = bundle
    assembled = assemble_clearing(case, prices, scenarios, RiskConfig())
    with pytest.raises(ValueError):
        assembled.with_coupling(np.zeros((case.horizon, case.n_agg)),
                                np.zeros((case.horizon, case.n_agg)))


def test_pin_wind_rows():
    case = tiny_case()
    pin = np.full((case.horizon, case.n_wind), 2.5)
    assembled = assemble_clearing(case, pin_wind=pin)
    rows = assembled.layout.eq_slices["wind_pin"]
    np.testing.assert_allclose(assembled.qp.b_eq[rows], 2.5)
    assert assembled.layout.n_samples == 0
    assert "eta" not in assembled.layout.var_slices


def test_deterministic_assembly_has_no_risk_rows():
    case = tiny_case()
    assembled = assemble_clearing(case)
    assert "tail" not in assembled.layout.in_slices
    assert "u_lo" not in assembled.layout.in_slices


def test_extract_primal_shapes_and_padding():
    case = tiny_case()
    prices = tiny_prices(case)
    scenarios = tiny_scenarios(case, n=4)
    assembled = assemble_clearing(case, prices, scenarios, RiskConfig())
    x = np.arange(assembled.qp.n, dtype=float)
    parts = extract_primal(assembled.layout, x)
    assert parts["p_gen"].shape == (case.horizon, 1)
    assert parts["theta"].shape == (case.horizon, 2)
    sched = parts["schedules"][(1, 1, 1)]
    assert sched.shape == (case.horizon,)
    assert parts["tail_excess"].shape == (4,)
    assert np.isscalar(parts["var_estimate"]) or parts["var_estimate"].ndim == 0


def test_extract_prices_signs():
    # Balance rows are written supply-minus-load = base_load, so the
    # reported nodal price is the negated equality dual; aggregator
    # rows are written sum(p) - p_dra = 0, keeping their dual price-signed.
    case = tiny_case()
    prices = tiny_prices(case)
    scenarios = tiny_scenarios(case, n=4)
    assembled = assemble_clearing(case, prices, scenarios, RiskConfig())
    duals = np.zeros(assembled.qp.m_eq)
    duals[assembled.layout.eq_slices["balance"]] = -7.0
    duals[assembled.layout.eq_slices["agg_balance"]] = 7.0
    lmps, dra = extract_prices(assembled.layout, duals)
    np.testing.assert_allclose(lmps, 7.0)
    np.testing.assert_allclose(dra, 7.0)


def test_risk_assembly_requires_prices_and_scenarios():
    case = tiny_case()
    with pytest.raises(ValueError):
        assemble_clearing(case, None, None, RiskConfig())
