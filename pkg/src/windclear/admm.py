"""Decomposed clearing: coordinator and aggregator subproblems.

The consumption-balance constraints (each aggregator's cleared
quantity equals the sum of its members' schedules) are the only
coupling between the system operator's dispatch problem and the
aggregators' scheduling problems, so they are relaxed with per-slot
multipliers lambda[t, j] and a quadratic penalty rho/2.  One iteration
is

    1. coordinator solves dispatch with +lambda p_dra
       + rho/2 (p_dra - consumption_prev)^2,
    2. each aggregator schedules its members against -lambda sum(p)
       + rho/2 (sum(p) - p_dra_new)^2, in parallel,
    3. lambda += rho (p_dra_new - consumption_new),

repeated until the coupling mismatch xi = ||p_dra - consumption||_F
drops to the configured threshold.

Privacy boundary: the coordinator object is built from a stripped
view of the case (aggregator bus and headroom only) and the message
dataclasses below are the only data that crosses in either direction,
so per-appliance parameters and schedules never reach the
coordinator's subproblem.

Price signs: the internal multiplier converges to the negative of the
aggregator's nodal price, because the relaxed constraint is written
``consumption - p_dra = 0`` on the centralized side.  The reported
``dra_prices`` therefore negate the coordinator-side multiplier
estimate lambda + rho (p_dra - consumption_prev), which by the
coordinator's stationarity equals the aggregator-bus LMP exactly
whenever the headroom bounds are slack.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assemble import assemble_clearing, extract_prices, extract_primal
from .clearing import (
    MODE_ADMM,
    ClearingConfig,
    DispatchSolution,
    TraceRow,
    check_inputs,
    consumption_utility,
    generation_cost,
)
from .errors import SolverError
from .grid import Aggregator, NetworkCase, appliance_constraints
from .qp import STATUS_OPTIMAL, QuadraticProgram, solve_qp


@dataclass(frozen=True)
class IsoToAggregator:
    """Coordinator-to-aggregator message: one column of the state."""

    multipliers: np.ndarray  # [T] $/MWh, internal sign
    target: np.ndarray       # [T] MW, the coordinator's cleared quantity


@dataclass(frozen=True)
class AggregatorToIso:
    """Aggregator-to-coordinator message: aggregate consumption only."""

    consumption: np.ndarray  # [T] MW


def dual_update(multipliers, p_dra, consumption, rho):
    """Multiplier step: lambda + rho (p_dra - consumption)."""
    return multipliers + rho * (np.asarray(p_dra) - np.asarray(consumption))


def primal_residual(p_dra, consumption):
    """Coupling mismatch xi, a Frobenius norm over slots and aggregators."""
    return float(np.linalg.norm(np.asarray(p_dra) - np.asarray(consumption)))


def _public_view(case):
    """The case as the coordinator may see it: no appliance data."""
    return NetworkCase(
        horizon=case.horizon,
        mva_base=case.mva_base,
        buses=case.buses,
        lines=case.lines,
        generators=case.generators,
        wind_farms=case.wind_farms,
        aggregators=[Aggregator(bus=a.bus, p_dra_max=a.p_dra_max) for a in case.aggregators],
    )


@dataclass
class IsoStep:
    """One coordinator solve: dispatch, risk tail, and prices."""

    p_gen: np.ndarray
    p_wind: np.ndarray
    p_dra: np.ndarray
    theta: np.ndarray
    var_estimate: float
    tail_excess: np.ndarray
    lmps: np.ndarray
    kkt: object


class IsoProblem:
    """The coordinator's dispatch subproblem, assembled once.

    Only the linear objective term changes between iterations, so each
    call to :meth:`solve` reuses the constraint matrices.
    """

    def __init__(self, case, prices, scenarios, risk, rho, qp_tol=1e-8, qp_max_iter=50_000):
        self._assembled = assemble_clearing(
            _public_view(case),
            prices,
            scenarios,
            risk,
            include_appliances=False,
            prox_rho=rho,
        )
        self._qp_tol = qp_tol
        self._qp_max_iter = qp_max_iter

    def solve(self, multipliers, consumption):
        """x-update against the current multipliers and consumptions."""
        qp = self._assembled.with_coupling(multipliers, consumption)
        sol = solve_qp(qp, tol=self._qp_tol, max_iter=self._qp_max_iter)
        if sol.status != STATUS_OPTIMAL:
            raise SolverError(f"coordinator subproblem finished with status {sol.status}")
        layout = self._assembled.layout
        parts = extract_primal(layout, sol.x)
        lmps, _ = extract_prices(layout, sol.duals_eq)
        return IsoStep(
            p_gen=parts["p_gen"],
            p_wind=parts["p_wind"],
            p_dra=parts["p_dra"],
            theta=parts["theta"],
            var_estimate=parts["var_estimate"],
            tail_excess=parts["tail_excess"],
            lmps=lmps,
            kkt=sol.kkt,
        )


def iso_subproblem(iso, multipliers, consumption):
    """Functional form of the coordinator step (mainly for tests)."""
    return iso.solve(multipliers, consumption)


class AggregatorWorker:
    """One aggregator's scheduling subproblem.

    Holds the private member data and the assembled constraint
    matrices; per iteration only the linear term moves.  The returned
    message carries aggregate consumption alone.
    """

    def __init__(self, index, aggregator, horizon, rho, qp_tol=1e-8, qp_max_iter=50_000):
        self.index = index
        self.horizon = horizon
        self._rho = float(rho)
        self._qp_tol = qp_tol
        self._qp_max_iter = qp_max_iter
        self._owners = [a.owner for a in aggregator.appliances]
        self._blocks = [appliance_constraints(a, horizon) for a in aggregator.appliances]
        self._gammas = [a.utility_curvature for a in aggregator.appliances]
        self._deltas = [a.utility_slope for a in aggregator.appliances]
        curvature = np.concatenate(
            [np.full(b.slots.size, g) for g, b in zip(self._gammas, self._blocks)]
        ) if self._blocks else np.zeros(0)
        slope = np.concatenate(
            [np.full(b.slots.size, d) for d, b in zip(self._deltas, self._blocks)]
        ) if self._blocks else np.zeros(0)

        self._n = int(sum(b.slots.size for b in self._blocks))
        self._starts = np.cumsum([0] + [b.slots.size for b in self._blocks])[:-1]
        # Column index per variable and, per slot, which variables draw then.
        self._var_slot = np.concatenate([b.slots for b in self._blocks]) if self._blocks else np.zeros(0, dtype=int)
        self._slot_vars = [np.nonzero(self._var_slot == t)[0] for t in range(horizon)]

        self._schedules = {o: np.zeros(horizon) for o in self._owners}
        self._consumption = np.zeros(horizon)

        if self._n == 0:
            return

        # Quadratic part: utility curvature plus rho on every pair of
        # variables sharing a slot (from rho/2 (sum p - target)^2).
        rows, cols, vals = [], [], []
        rows.append(np.arange(self._n))
        cols.append(np.arange(self._n))
        vals.append(curvature)
        for t in range(horizon):
            idx = self._slot_vars[t]
            if idx.size:
                rr, cc = np.meshgrid(idx, idx, indexing="ij")
                rows.append(rr.ravel())
                cols.append(cc.ravel())
                vals.append(np.full(idx.size * idx.size, self._rho))
        q = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self._n, self._n),
        ).tocsc()

        self._c_base = -slope
        eq_rows = []
        eq_cols = []
        for k, blk in enumerate(self._blocks):
            eq_rows.append(np.full(blk.slots.size, k))
            eq_cols.append(self._starts[k] + np.arange(blk.slots.size))
        a_eq = sp.coo_matrix(
            (np.ones(self._n), (np.concatenate(eq_rows), np.concatenate(eq_cols))),
            shape=(len(self._blocks), self._n),
        ).tocsc()
        b_eq = np.array([b.energy_total for b in self._blocks])

        eye = sp.eye(self._n, format="csc")
        a_in = sp.vstack([eye, -eye], format="csc")
        h_in = np.concatenate(
            [
                np.concatenate([np.full(b.slots.size, b.p_max) for b in self._blocks]),
                np.concatenate([np.full(b.slots.size, -b.p_min) for b in self._blocks]),
            ]
        )
        self._qp = QuadraticProgram(q, self._c_base, a_eq, b_eq, a_in, h_in)

    def solve(self, message):
        """y-update: schedule members against multipliers and target."""
        if self._n == 0:
            return AggregatorToIso(consumption=np.zeros(self.horizon))
        c = self._c_base.copy()
        adj = -np.asarray(message.multipliers) - self._rho * np.asarray(message.target)
        c += adj[self._var_slot]
        qp = QuadraticProgram(
            self._qp.Q, c, self._qp.A_eq, self._qp.b_eq, self._qp.A_in, self._qp.h_in
        )
        sol = solve_qp(qp, tol=self._qp_tol, max_iter=self._qp_max_iter)
        if sol.status != STATUS_OPTIMAL:
            raise SolverError(
                f"aggregator {self.index} subproblem finished with status {sol.status}"
            )
        for k, blk in enumerate(self._blocks):
            full = np.zeros(self.horizon)
            full[blk.slots] = sol.x[self._starts[k] + np.arange(blk.slots.size)]
            self._schedules[self._owners[k]] = full
        self._consumption = sum(self._schedules.values(), np.zeros(self.horizon))
        return AggregatorToIso(consumption=self._consumption.copy())

    def schedules(self):
        """Final member schedules; read only when assembling results."""
        return {o: p.copy() for o, p in self._schedules.items()}

    def utility_total(self):
        """Aggregate member utility in $, for reporting."""
        total = 0.0
        for k in range(len(self._blocks)):
            p = self._schedules[self._owners[k]]
            total += float(np.sum(-0.5 * self._gammas[k] * p * p + self._deltas[k] * p))
        return total


def aggregator_subproblem(aggregator, horizon, rho, multipliers, target, index=0):
    """One-shot aggregator solve (mainly for tests)."""
    worker = AggregatorWorker(index, aggregator, horizon, rho)
    reply = worker.solve(IsoToAggregator(multipliers=multipliers, target=target))
    return worker.schedules(), reply


def solve_admm(case, prices, scenarios, config=None):
    """Run the decomposed clearing to convergence.

    Returns a :class:`DispatchSolution` whose status is ``converged``
    when the coupling residual met ``config.eps_primal`` and
    ``max_iter`` otherwise; the trace always records every iteration.
    """
    config = config or ClearingConfig()
    check_inputs(case, prices, scenarios)

    T, n_agg = case.horizon, case.n_agg
    iso = IsoProblem(
        case, prices, scenarios, config.risk, config.rho, config.qp_tol, config.qp_max_iter
    )
    workers = [
        AggregatorWorker(j, agg, T, config.rho, config.qp_tol, config.qp_max_iter)
        for j, agg in enumerate(case.aggregators)
    ]

    multipliers = np.zeros((T, n_agg))
    consumption = np.zeros((T, n_agg))
    trace = []
    converged = False
    step = None
    mult_at_step = multipliers
    prev_consumption = consumption

    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        for k in range(1, config.max_admm_iter + 1):
            tic = time.perf_counter()
            mult_at_step = multipliers
            prev_consumption = consumption
            try:
                step = iso.solve(multipliers, consumption)

                messages = [
                    IsoToAggregator(
                        multipliers=multipliers[:, j].copy(), target=step.p_dra[:, j].copy()
                    )
                    for j in range(n_agg)
                ]
                if pool is not None:
                    replies = list(
                        pool.map(lambda wm: wm[0].solve(wm[1]), zip(workers, messages))
                    )
                else:
                    replies = [w.solve(m) for w, m in zip(workers, messages)]
            except SolverError as exc:
                raise SolverError(f"iteration {k}: {exc}") from exc
            consumption = (
                np.column_stack([r.consumption for r in replies])
                if n_agg
                else np.zeros((T, 0))
            )

            multipliers = dual_update(multipliers, step.p_dra, consumption, config.rho)
            xi = primal_residual(step.p_dra, consumption)

            schedules = {}
            for w in workers:
                schedules.update(w.schedules())
            objective = (
                generation_cost(case, step.p_gen)
                - consumption_utility(case, schedules)
                + config.risk.mu
                * (
                    step.var_estimate
                    + np.sum(step.tail_excess)
                    / (step.tail_excess.size * (1.0 - config.risk.beta))
                )
            )
            trace.append(
                TraceRow(k, float(objective), xi, 1e3 * (time.perf_counter() - tic))
            )
            if xi <= config.eps_primal:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    # Coordinator-side multiplier estimate at the final x-update; equals
    # the aggregator-bus LMP wherever the headroom bounds are slack.
    dra_prices = -(mult_at_step + config.rho * (step.p_dra - prev_consumption))

    schedules = {}
    for w in workers:
        schedules.update(w.schedules())

    return DispatchSolution(
        mode=MODE_ADMM,
        status="converged" if converged else "max_iter",
        objective=trace[-1].objective,
        p_gen=step.p_gen,
        p_wind=step.p_wind,
        p_dra=step.p_dra,
        theta=step.theta,
        schedules=schedules,
        lmps=step.lmps,
        dra_prices=dra_prices,
        var_estimate=step.var_estimate,
        tail_excess=step.tail_excess,
        iterations=len(trace),
        trace=trace,
        kkt=step.kkt,
    )
