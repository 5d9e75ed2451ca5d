import numpy as np
import pytest

from windclear.errors import ValidationError
from windclear.grid import (
    Aggregator,
    Appliance,
    Bus,
    Generator,
    Line,
    NetworkCase,
    WindFarm,
    appliance_constraints,
    build_flow_matrices,
    validate_case,
)
from windclear.wecc6 import build_case

from util import tiny_case


def test_flow_matrices_six_bus_hand_oracle():
    # Ring 1-6-2-5-3-4-1; incidence written out by hand from the line list.
    case = build_case(users_per_aggregator=1, seed=0)
    flows = build_flow_matrices(case)

    a_n = np.array([
        [1, 0, 0, 0, 0, -1],
        [-0, -1, 0, 0, 0, 1],
        [0, 1, 0, 0, -1, 0],
        [0, 0, -1, 0, 1, 0],
        [0, 0, 1, -1, 0, 0],
        [-1, 0, 0, 1, 0, 0],
    ], dtype=float)
    np.testing.assert_array_equal(flows.incidence, a_n)

    x = np.array([0.20, 0.30, 0.25, 0.10, 0.30, 0.40])
    np.testing.assert_allclose(np.diag(flows.branch_susceptance), -1.0 / x)

    a_g = np.zeros((6, 3))
    a_g[0, 0] = a_g[1, 1] = a_g[2, 2] = 1.0
    np.testing.assert_array_equal(flows.gen_incidence, a_g)

    a_w = np.zeros((6, 3))
    a_w[0, 0] = a_w[1, 1] = a_w[4, 2] = 1.0
    np.testing.assert_array_equal(flows.wind_incidence, a_w)

    a_a = np.zeros((6, 4))
    a_a[3, 0] = a_a[3, 1] = a_a[4, 2] = a_a[5, 3] = 1.0
    np.testing.assert_array_equal(flows.aggregator_incidence, a_a)


def test_nodal_susceptance_is_reactance_weighted_laplacian():
    case = build_case(users_per_aggregator=1, seed=0)
    flows = build_flow_matrices(case)
    b_n = flows.nodal_susceptance

    lap = flows.incidence.T @ np.diag(1.0 / np.array([0.2, 0.3, 0.25, 0.1, 0.3, 0.4])) \
        @ flows.incidence
    np.testing.assert_allclose(b_n, lap, atol=1e-12)
    np.testing.assert_allclose(b_n, b_n.T, atol=1e-12)
    np.testing.assert_allclose(b_n @ np.ones(6), 0.0, atol=1e-12)
    eig = np.linalg.eigvalsh(b_n)
    assert eig[0] > -1e-10 and np.sum(np.abs(eig) < 1e-9) == 1


def test_angle_to_flow_two_bus_hand_case():
    case = tiny_case()
    flows = build_flow_matrices(case)
    # x = 0.2 -> B_f = -diag(-5) [1, -1] = [5, -5]; theta=(0.1, 0) is a
    # 0.5 pu flow from bus 1 to bus 2, 50 MW at the 100 MVA base.
    np.testing.assert_allclose(flows.angle_to_flow, [[5.0, -5.0]])
    flow = flows.angle_to_flow @ np.array([0.1, 0.0])
    np.testing.assert_allclose(case.mva_base * flow, [50.0])


def test_base_load_matrix_and_appliance_order():
    case = build_case(users_per_aggregator=2, seed=5)
    loads = case.base_load_matrix()
    assert loads.shape == (24, 6)
    np.testing.assert_allclose(loads[:, 0], case.buses[0].base_load)
    owners = [a.owner for a in case.all_appliances()]
    assert owners == sorted(owners)
    assert owners[0] == (1, 1, 1) and owners[-1][0] == 4


def test_validate_ok_on_shipped_case():
    assert validate_case(build_case(), raise_on_error=False) == []


def test_validate_reports_every_violation():
    case = NetworkCase(
        horizon=4,
        mva_base=-1.0,
        buses=[Bus(id=1, base_load=np.ones(4)), Bus(id=3, base_load=-np.ones(4))],
        lines=[Line(from_bus=1, to_bus=9, reactance_pu=-0.2)],
        generators=[Generator(bus=1, cost_a=-0.1, cost_b=5.0, p_min=10.0, p_max=5.0,
                              ramp_up=-1.0, ramp_down=1.0)],
        wind_farms=[WindFarm(bus=7, p_commit_max=np.ones(3))],
        aggregators=[Aggregator(bus=2, p_dra_max=-3.0, appliances=[
            Appliance(owner=(1, 1, 1), energy_total=50.0, p_min=0.0, p_max=2.0,
                      t_start=2, t_end=3),
            Appliance(owner=(1, 1, 2), energy_total=1.0, p_min=0.0, p_max=2.0,
                      t_start=3, t_end=2),
        ])],
    )
    v = validate_case(case, raise_on_error=False)
    expected_bits = [
        "mva_base", "buses: ids", "base_load: negative",
        "lines[0]: endpoint", "reactance_pu",
        "cost_a", "p_min <= p_max", "ramp rates",
        "wind_farms[0].bus", "p_commit_max: expected",
        "p_dra_max", "energy 50.0 unreachable", "window [3, 2]",
    ]
    for bit in expected_bits:
        assert any(bit in line for line in v), f"missing violation for {bit!r}:\n{v}"
    with pytest.raises(ValidationError) as err:
        validate_case(case)
    assert len(err.value.violations) == len(v)


def test_validate_detects_islands():
    case = tiny_case()
    case.buses.append(Bus(id=3, base_load=np.zeros(case.horizon)))
    case.buses.append(Bus(id=4, base_load=np.zeros(case.horizon)))
    case.lines.append(Line(from_bus=3, to_bus=4, reactance_pu=0.1))
    v = validate_case(case, raise_on_error=False)
    assert any("islands" in line for line in v)


def test_generator_initial_defaults_to_p_min():
    g = Generator(bus=1, cost_a=0.0, cost_b=1.0, p_min=4.0, p_max=8.0,
                  ramp_up=1.0, ramp_down=1.0)
    assert g.p_initial == 4.0
    g2 = Generator(bus=1, cost_a=0.0, cost_b=1.0, p_min=4.0, p_max=8.0,
                   ramp_up=1.0, ramp_down=1.0, p_initial=6.0)
    assert g2.p_initial == 6.0


def test_appliance_block_window_and_membership():
    a = Appliance(owner=(1, 1, 1), energy_total=4.0, p_min=0.5, p_max=2.0,
                  t_start=2, t_end=4)
    blk = appliance_constraints(a, horizon=6)
    np.testing.assert_array_equal(blk.slots, [1, 2, 3])
    a_eq, b_eq, lower, upper = blk.as_dense()
    np.testing.assert_array_equal(a_eq, [0, 1, 1, 1, 0, 0])
    assert b_eq == 4.0
    np.testing.assert_array_equal(upper, [0, 2, 2, 2, 0, 0])

    assert blk.contains([0, 1.0, 1.5, 1.5, 0, 0])
    assert not blk.contains([0, 2.0, 2.0, 0.0, 0, 0])     # slot below p_min
    assert not blk.contains([0, 1.0, 1.0, 1.0, 0, 0])     # energy short
    assert not blk.contains([1.0, 1.0, 1.5, 1.5, 0, 0])   # outside window
    assert not blk.contains(np.zeros(5))                  # wrong shape


def test_appliance_constraints_rejects_bad_windows():
    bad = [
        Appliance(owner=(1, 1, 1), energy_total=1.0, p_min=0.0, p_max=1.0,
                  t_start=0, t_end=2),
        Appliance(owner=(1, 1, 2), energy_total=1.0, p_min=2.0, p_max=1.0,
                  t_start=1, t_end=2),
        Appliance(owner=(1, 1, 3), energy_total=9.0, p_min=0.0, p_max=1.0,
                  t_start=1, t_end=2),
    ]
    for a in bad:
        with pytest.raises(ValueError):
            appliance_constraints(a, horizon=4)
