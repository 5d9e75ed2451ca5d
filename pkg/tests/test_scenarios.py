import numpy as np
import pytest

from windclear.scenarios import ScenarioSet, default_sigma, generate_scenarios


def test_generation_is_seed_deterministic():
    forecast = np.array([[10.0, 5.0], [12.0, 4.0]])
    a = generate_scenarios(forecast, 2.0, 50, seed=9)
    b = generate_scenarios(forecast, 2.0, 50, seed=9)
    c = generate_scenarios(forecast, 2.0, 50, seed=10)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    assert a.seed == 9 and a.sigma == 2.0


def test_samples_truncated_at_zero():
    forecast = np.full((3, 2), 0.5)
    scen = generate_scenarios(forecast, 10.0, 400, seed=1)
    assert np.min(scen.samples) == 0.0  # heavy truncation must actually clip
    assert np.all(scen.samples >= 0.0)


def test_sigma_broadcasting_and_scale():
    forecast = np.full((4, 1), 100.0)
    sigma = np.array([[0.0], [0.0], [5.0], [5.0]])
    scen = generate_scenarios(forecast, sigma, 200, seed=2)
    np.testing.assert_array_equal(scen.samples[:, :2, :], 100.0)
    spread = np.std(scen.samples[:, 2:, :])
    assert 3.5 < spread < 6.5


def test_default_sigma_fraction_and_floor():
    forecast = np.array([[10.0, 0.1]])
    sigma = default_sigma(forecast, fraction=0.2, floor=0.5)
    np.testing.assert_allclose(sigma, [[2.0, 0.5]])


def test_guards():
    forecast = np.full((2, 1), 3.0)
    with pytest.raises(ValueError):
        generate_scenarios(forecast, 1.0, 0, seed=1)
    with pytest.raises(ValueError):
        generate_scenarios(forecast, -1.0, 5, seed=1)
    with pytest.raises(ValueError):
        ScenarioSet(forecast=forecast, samples=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        ScenarioSet(forecast=forecast, samples=np.zeros((3, 2, 2)))
    with pytest.raises(ValueError):
        ScenarioSet(forecast=forecast, samples=-np.ones((3, 2, 1)))


def test_scenario_set_properties():
    scen = generate_scenarios(np.full((6, 2), 4.0), 1.0, 11, seed=0)
    assert (scen.n_samples, scen.horizon, scen.n_wind) == (11, 6, 2)
