"""Two-settlement payment computation from cleared quantities and prices.

Day-ahead quantities settle at day-ahead LMPs; real-time deviations
from the day-ahead schedule settle at real-time LMPs.  Wind deviations
are special: they settle against the contracted deviation prices (sell
surplus at s, buy shortfall at b) rather than the real-time LMP, which
is exactly the transaction cost the clearing problem prices into its
risk term.

Sign conventions: ``generator_revenue`` and ``wind_revenue`` are paid
to the producer; ``aggregator_payment`` is owed by the aggregator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RealTimeQuantities:
    """Real-time schedules; any field left None defaults to day-ahead."""

    p_gen: np.ndarray | None = None  # [T, N_gen] MW
    p_dra: np.ndarray | None = None  # [T, N_agg] MW


@dataclass
class SettlementReport:
    """Per-party dollar settlements plus the inputs that produced them."""

    generator_revenue: np.ndarray   # [N_gen] $
    aggregator_payment: np.ndarray  # [N_agg] $
    wind_revenue: np.ndarray        # [N_wind] $
    da_lmps: np.ndarray             # [T, N_bus] $/MWh
    rt_lmps: np.ndarray             # [T, N_bus] $/MWh
    realized_wind: np.ndarray       # [T, N_wind] MW

    def rows(self):
        """Flat (party, index, amount) rows for tabular output."""
        out = []
        for i, v in enumerate(self.generator_revenue):
            out.append(("generator", i + 1, float(v)))
        for j, v in enumerate(self.aggregator_payment):
            out.append(("aggregator", j + 1, float(v)))
        for m, v in enumerate(self.wind_revenue):
            out.append(("wind", m + 1, float(v)))
        return out


def extract_lmps(solution):
    """Nodal price schedule of a cleared solution, [T, N_bus] $/MWh."""
    if solution.lmps is None:
        raise ValueError("solution carries no locational prices")
    return np.asarray(solution.lmps, dtype=float)


def settle(case, solution, rt_lmps, realized_wind, prices, rt=None):
    """Compute the two-settlement cash flows for every market party.

    Parameters
    ----------
    case : NetworkCase
    solution : DispatchSolution
        Day-ahead cleared quantities and prices.
    rt_lmps : array [T, N_bus]
        Real-time nodal prices; pass the day-ahead LMPs to settle a
        day with no real-time deviations.
    realized_wind : array [T, N_wind]
        Actual wind production, MW.
    prices : PriceSchedule
        Deviation purchase/sell prices for the wind imbalance.
    rt : RealTimeQuantities, optional
        Real-time generator and aggregator schedules; defaults to the
        day-ahead schedule (no deviation).

    Returns
    -------
    SettlementReport
    """
    da_lmps = extract_lmps(solution)
    rt_lmps = np.asarray(rt_lmps, dtype=float)
    realized = np.asarray(realized_wind, dtype=float)
    if rt_lmps.shape != da_lmps.shape:
        raise ValueError(f"rt_lmps is {rt_lmps.shape}, expected {da_lmps.shape}")
    if realized.shape != solution.p_wind.shape:
        raise ValueError(f"realized_wind is {realized.shape}, expected {solution.p_wind.shape}")
    rt = rt or RealTimeQuantities()
    rt_gen = solution.p_gen if rt.p_gen is None else np.asarray(rt.p_gen, dtype=float)
    rt_dra = solution.p_dra if rt.p_dra is None else np.asarray(rt.p_dra, dtype=float)

    gen_rev = np.zeros(case.n_gen)
    for i, g in enumerate(case.generators):
        n = g.bus - 1
        gen_rev[i] = np.sum(
            da_lmps[:, n] * solution.p_gen[:, i]
            + rt_lmps[:, n] * (rt_gen[:, i] - solution.p_gen[:, i])
        )

    agg_pay = np.zeros(case.n_agg)
    for j, agg in enumerate(case.aggregators):
        n = agg.bus - 1
        agg_pay[j] = np.sum(
            da_lmps[:, n] * solution.p_dra[:, j]
            + rt_lmps[:, n] * (rt_dra[:, j] - solution.p_dra[:, j])
        )

    wind_rev = np.zeros(case.n_wind)
    short = np.maximum(solution.p_wind - realized, 0.0)
    long = np.maximum(realized - solution.p_wind, 0.0)
    for m, w in enumerate(case.wind_farms):
        n = w.bus - 1
        wind_rev[m] = np.sum(
            da_lmps[:, n] * solution.p_wind[:, m]
            + prices.sell[:, m] * long[:, m]
            - prices.purchase[:, m] * short[:, m]
        )

    return SettlementReport(
        generator_revenue=gen_rev,
        aggregator_payment=agg_pay,
        wind_revenue=wind_rev,
        da_lmps=da_lmps,
        rt_lmps=rt_lmps,
        realized_wind=realized,
    )
