"""Bundled six-bus study system with PHEV demand response.

A ring of six buses patterned on a reduced WECC test network: three
conventional units, three 20 MW wind farms, four demand-response
aggregators whose members are plug-in electric vehicles charging
overnight, and diurnal base load and deviation prices.  The generator
table and the vehicle population parameters are fixed; the vehicle
fleets themselves are drawn reproducibly from a seed, so the same
seed always yields byte-identical bundles.
"""
from __future__ import annotations

import numpy as np

from .grid import Aggregator, Appliance, Bus, Generator, Line, NetworkCase, WindFarm
from .risk import PriceSchedule
from .scenarios import default_sigma, generate_scenarios

HORIZON = 24
MVA_BASE = 100.0

# from_bus, to_bus, reactance (p.u.): a single ring 1-6-2-5-3-4-1.
_LINES = [
    (1, 6, 0.20),
    (6, 2, 0.30),
    (2, 5, 0.25),
    (5, 3, 0.10),
    (3, 4, 0.30),
    (4, 1, 0.40),
]

# bus, cost_a ($/MW^2 h), cost_b ($/MWh), p_min, p_max, ramp_up, ramp_down (MW)
_GENERATORS = [
    (1, 0.30, 50.0, 10.0, 90.0, 50.0, 50.0),
    (2, 0.15, 30.0, 5.0, 50.0, 35.0, 40.0),
    (3, 0.20, 40.0, 8.0, 60.0, 40.0, 40.0),
]

_WIND_BUSES = [1, 2, 5]
_WIND_CAP = 20.0  # MW per farm, every slot

_AGG_BUSES = [4, 4, 5, 6]
_AGG_CAP = 50.0  # MW headroom per aggregator and slot

# Total system base load by slot (MW), slot t covering hour [t-1, t),
# and its split across the four load buses.
_LOAD_TOTAL = np.array(
    [96, 92, 90, 89, 90, 94, 104, 122, 138, 148, 152, 150,
     146, 142, 140, 142, 148, 158, 166, 164, 156, 138, 118, 104],
    dtype=float,
)
_LOAD_SPLIT = {3: 0.30, 4: 0.25, 5: 0.25, 6: 0.20}

# Day-ahead deviation purchase price b ($/MWh); morning and evening
# peaks, overnight valley.  Sell-back s is a fixed fraction of b.
_PURCHASE = np.array(
    [24, 22, 21, 21, 22, 25, 30, 38, 42, 44, 43, 41,
     36, 34, 33, 34, 36, 40, 44, 45, 42, 34, 29, 26],
    dtype=float,
)
_SELL_FRACTION = 0.9

# Forecast wind output per farm (MW): strongest overnight, midday lull.
_FORECAST = np.array(
    [
        [13, 14, 15, 15, 14, 13, 11, 9, 7, 6, 5, 5, 5, 6, 6, 7, 8, 9, 10, 11, 12, 12, 13, 13],
        [10, 11, 12, 13, 13, 12, 11, 10, 8, 7, 6, 6, 6, 6, 7, 7, 8, 9, 10, 10, 11, 11, 10, 10],
        [8, 9, 10, 11, 11, 11, 10, 9, 8, 7, 7, 6, 6, 7, 7, 8, 8, 9, 9, 10, 10, 9, 9, 8],
    ],
    dtype=float,
).T  # [T, 3]

# Vehicle population: battery energy targets (MWh), charger ratings
# (MW), charging window.  Plug-in at 1am (slot 2); 70 percent must
# finish by the end of slot 7, the rest by slot 8.
_PHEV_ENERGY = [10.0, 11.0, 12.0]
_PHEV_RATING = [2.1, 2.3, 2.5]
_PHEV_START = 2
_PHEV_END_EARLY, _PHEV_END_LATE = 7, 8
_PHEV_EARLY_SHARE = 0.7

DEFAULT_USERS = 8
DEFAULT_CASE_SEED = 11
DEFAULT_SCENARIO_SEED = 1
DEFAULT_N_SCENARIOS = 200


def _sample_fleet(rng, agg_index, n_users):
    fleet = []
    for user in range(1, n_users + 1):
        energy = _PHEV_ENERGY[rng.integers(len(_PHEV_ENERGY))]
        rating = _PHEV_RATING[rng.integers(len(_PHEV_RATING))]
        t_end = _PHEV_END_EARLY if rng.random() < _PHEV_EARLY_SHARE else _PHEV_END_LATE
        fleet.append(
            Appliance(
                owner=(agg_index, user, 1),
                energy_total=energy,
                p_min=0.0,
                p_max=rating,
                t_start=_PHEV_START,
                t_end=t_end,
            )
        )
    return fleet


def build_case(users_per_aggregator=DEFAULT_USERS, seed=DEFAULT_CASE_SEED):
    """Assemble the six-bus network with freshly drawn vehicle fleets."""
    rng = np.random.default_rng(seed)
    buses = []
    for bus_id in range(1, 7):
        share = _LOAD_SPLIT.get(bus_id, 0.0)
        buses.append(Bus(id=bus_id, base_load=share * _LOAD_TOTAL))
    lines = [Line(from_bus=f, to_bus=t, reactance_pu=x) for f, t, x in _LINES]
    gens = [
        Generator(bus=b, cost_a=a, cost_b=c, p_min=lo, p_max=hi, ramp_up=ru, ramp_down=rd)
        for b, a, c, lo, hi, ru, rd in _GENERATORS
    ]
    farms = [WindFarm(bus=b, p_commit_max=np.full(HORIZON, _WIND_CAP)) for b in _WIND_BUSES]
    aggs = [
        Aggregator(
            bus=b,
            p_dra_max=_AGG_CAP,
            appliances=_sample_fleet(rng, j + 1, users_per_aggregator),
        )
        for j, b in enumerate(_AGG_BUSES)
    ]
    return NetworkCase(
        horizon=HORIZON,
        mva_base=MVA_BASE,
        buses=buses,
        lines=lines,
        generators=gens,
        wind_farms=farms,
        aggregators=aggs,
    )


def build_prices():
    """Deviation price schedule shared by the three farms."""
    purchase = np.repeat(_PURCHASE[:, None], len(_WIND_BUSES), axis=1)
    return PriceSchedule(purchase=purchase, sell=_SELL_FRACTION * purchase)


def build_forecast():
    """Forecast wind output, [T, N_wind] MW."""
    return _FORECAST.copy()


def build_bundle(
    users_per_aggregator=DEFAULT_USERS,
    case_seed=DEFAULT_CASE_SEED,
    n_scenarios=DEFAULT_N_SCENARIOS,
    scenario_seed=DEFAULT_SCENARIO_SEED,
    sigma_fraction=0.2,
    sigma_floor=0.5,
):
    """Case, prices, and a scenario set, all reproducible from seeds."""
    case = build_case(users_per_aggregator, case_seed)
    prices = build_prices()
    forecast = build_forecast()
    sigma = default_sigma(forecast, sigma_fraction, sigma_floor)
    scen = generate_scenarios(forecast, sigma, n_scenarios, scenario_seed)
    return case, prices, scen
