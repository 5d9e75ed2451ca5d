"""Assembly of clearing problems into canonical sparse QPs.

One variable layout serves every solve mode:

    [ p_gen | p_wind | p_dra | theta | appliance slots | eta | u | e ]

with time-major ordering inside each device block (index t * N + i).
Appliance variables exist only for slots inside each appliance's
window.  The risk tail adds one value-at-risk variable eta, one
tail-excess variable u_s per scenario, and, whenever the price
half-spread is anywhere nonzero, one epigraph variable e_{s,t,m} per
scenario, slot, and farm bounding |p_wind - w_s| from above.  So a
full stochastic instance has

    n = T (N_g + N_w + N_a + N_b) + sum_a |window_a| + 1 + N_s
        + N_s T N_w [only if any half-spread is nonzero]

variables.  Equality rows are nodal balance, the reference-angle pins,
per-aggregator consumption balance, per-appliance energy, and optional
wind pins; inequality rows are the device boxes, ramps, optional line
limits, tail-excess nonnegativity, the epigraph rows, and the
per-scenario tail rows

    sum_{t,m} varpi e_{s,t,m} + vartheta p_wind - u_s - eta
        <= sum_{t,m} vartheta w_s.

Nodal balance is written as

    A_g p_gen + A_w p_wind - A_a p_dra - base * B_n theta = base_load,

so with the solver's stationarity convention Qx + c + A'y = 0 the
locational marginal price is the NEGATED balance dual, while the
aggregator-balance rows (sum of member consumption minus p_dra = 0)
carry the aggregator's nodal price with a positive sign.  Extraction
helpers below apply those signs so callers only ever see price-signed
quantities.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import appliance_constraints, build_flow_matrices
from .qp import QuadraticProgram


class _Coo:
    """Triplet accumulator for one sparse matrix."""

    def __init__(self, n_cols):
        self.rows = []
        self.cols = []
        self.vals = []
        self.rhs = []
        self.n_rows = 0
        self.n_cols = n_cols
        self.slices = {}

    def block(self, name, count, rhs):
        start = self.n_rows
        self.n_rows += count
        self.slices[name] = slice(start, self.n_rows)
        self.rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (count,)))
        return start

    def entries(self, rows, cols, vals):
        rows, cols, vals = np.broadcast_arrays(
            np.asarray(rows, dtype=np.int64),
            np.asarray(cols, dtype=np.int64),
            np.asarray(vals, dtype=float),
        )
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())

    def build(self):
        if self.rows:
            r = np.concatenate(self.rows)
            c = np.concatenate(self.cols)
            v = np.concatenate(self.vals)
        else:
            r = c = v = np.zeros(0)
        mat = sp.coo_matrix((v, (r, c)), shape=(self.n_rows, self.n_cols)).tocsc()
        rhs = np.concatenate(self.rhs) if self.rhs else np.zeros(0)
        return mat, rhs


@dataclass
class ProblemLayout:
    """Index bookkeeping for one assembled clearing QP."""

    horizon: int
    n_gen: int
    n_wind: int
    n_agg: int
    n_bus: int
    n_samples: int
    include_risk: bool
    has_spread: bool
    n_vars: int
    var_slices: dict
    eq_slices: dict
    in_slices: dict
    appliance_owners: list          # owner tuple per appliance, flat order
    appliance_agg: np.ndarray       # aggregator index per appliance
    appliance_blocks: list          # ApplianceBlock per appliance
    appliance_starts: np.ndarray    # first column of each appliance block

    def reshape(self, x, name, per):
        return np.asarray(x[self.var_slices[name]]).reshape(self.horizon, per)


@dataclass
class AssembledProblem:
    qp: QuadraticProgram
    layout: ProblemLayout
    prox_rho: float | None = None
    base_linear: np.ndarray | None = None

    def with_coupling(self, multipliers, targets):
        """Return a QP whose linear term carries the coordination state.

        ``multipliers`` and ``targets`` are [T, N_agg]; the quadratic
        proximal weight was already baked in at assembly time via
        ``prox_rho``.  The matrices are shared, only the linear term
        is rebuilt, so this is cheap enough to call every iteration.
        """
        if self.prox_rho is None:
            raise ValueError("problem was not assembled with a proximal term")
        c = self.base_linear.copy()
        sl = self.layout.var_slices["p_dra"]
        c[sl] = np.ravel(multipliers) - self.prox_rho * np.ravel(targets)
        qp = self.qp
        return QuadraticProgram(
            qp.Q, c, qp.A_eq, qp.b_eq, qp.A_in, qp.h_in, qp.var_slices, qp.row_slices
        )


def _layout(case, n_samples, include_risk, has_spread, include_appliances):
    T = case.horizon
    n_gen, n_wind, n_agg, n_bus = case.n_gen, case.n_wind, case.n_agg, case.n_bus

    owners, agg_of, blocks = [], [], []
    if include_appliances:
        for j, agg in enumerate(case.aggregators):
            for a in agg.appliances:
                owners.append(a.owner)
                agg_of.append(j)
                blocks.append(appliance_constraints(a, T))

    slices = {}
    pos = 0

    def add(name, count):
        nonlocal pos
        slices[name] = slice(pos, pos + count)
        pos += count

    add("p_gen", T * n_gen)
    add("p_wind", T * n_wind)
    add("p_dra", T * n_agg)
    add("theta", T * n_bus)
    starts = np.zeros(len(blocks), dtype=np.int64)
    appl_total = 0
    for k, blk in enumerate(blocks):
        starts[k] = pos + appl_total
        appl_total += blk.slots.size
    add("appliance", appl_total)
    if include_risk:
        add("eta", 1)
        add("u", n_samples)
        if has_spread:
            add("e", n_samples * T * n_wind)

    return ProblemLayout(
        horizon=T,
        n_gen=n_gen,
        n_wind=n_wind,
        n_agg=n_agg,
        n_bus=n_bus,
        n_samples=n_samples if include_risk else 0,
        include_risk=include_risk,
        has_spread=has_spread,
        n_vars=pos,
        var_slices=slices,
        eq_slices={},
        in_slices={},
        appliance_owners=owners,
        appliance_agg=np.asarray(agg_of, dtype=np.int64),
        appliance_blocks=blocks,
        appliance_starts=starts,
    )


def assemble_clearing(
    case,
    prices=None,
    scenarios=None,
    risk=None,
    *,
    include_appliances=True,
    prox_rho=None,
    pin_wind=None,
):
    """Build the clearing QP for a validated case.

    Parameters
    ----------
    case : NetworkCase
    prices : PriceSchedule, required when ``risk`` is given
    scenarios : ScenarioSet, required when ``risk`` is given
    risk : RiskConfig or None
        None drops the whole transaction-cost tail (deterministic
        clearing, used for pinned baselines).
    include_appliances : bool
        False drops appliance variables, energy rows, and aggregator
        balance rows; p_dra then has no internal counterpart, which is
        the coordinator's view in the decomposed solve.
    prox_rho : float, optional
        Adds prox_rho to the p_dra quadratic diagonal; linear coupling
        terms are installed later through ``with_coupling``.
    pin_wind : array [T, N_wind], optional
        Equality-pins the wind commitment (baseline policies).

    Returns
    -------
    AssembledProblem
    """
    T = case.horizon
    n_gen, n_wind, n_agg, n_bus = case.n_gen, case.n_wind, case.n_agg, case.n_bus
    flow = build_flow_matrices(case)

    if risk is not None:
        if prices is None or scenarios is None:
            raise ValueError("risk-aware assembly needs prices and scenarios")
        if (prices.horizon, prices.n_wind) != (T, n_wind):
            raise ValueError(
                f"price schedule is {prices.purchase.shape}, case wants {(T, n_wind)}"
            )
        if (scenarios.horizon, scenarios.n_wind) != (T, n_wind):
            raise ValueError(
                f"scenario set is {scenarios.samples.shape[1:]}, case wants {(T, n_wind)}"
            )
        has_spread = bool(np.any(prices.half_spread != 0.0))
        n_samp = scenarios.n_samples
    else:
        has_spread = False
        n_samp = 0

    lay = _layout(case, n_samp, risk is not None, has_spread, include_appliances)
    sl = lay.var_slices

    def vidx(name, t, i, per):
        return sl[name].start + t * per + i

    def vcols(name):
        return np.arange(sl[name].start, sl[name].stop)

    trange = np.arange(T)

    # ---- objective -------------------------------------------------
    q_diag = np.zeros(lay.n_vars)
    c = np.zeros(lay.n_vars)
    for i, g in enumerate(case.generators):
        cols = vidx("p_gen", trange, i, n_gen)
        q_diag[cols] = 2.0 * g.cost_a
        c[cols] = g.cost_b
    flat_appliances = case.all_appliances() if include_appliances else []
    for k, blk in enumerate(lay.appliance_blocks):
        cols = lay.appliance_starts[k] + np.arange(blk.slots.size)
        q_diag[cols] = flat_appliances[k].utility_curvature
        c[cols] = -flat_appliances[k].utility_slope
    if prox_rho is not None:
        q_diag[sl["p_dra"]] += float(prox_rho)
    if risk is not None:
        c[sl["eta"]] = risk.mu
        c[sl["u"]] = risk.mu / (n_samp * (1.0 - risk.beta))

    # ---- equalities ------------------------------------------------
    eq = _Coo(lay.n_vars)

    bal0 = eq.block("balance", T * n_bus, case.base_load_matrix().ravel())
    for i, g in enumerate(case.generators):
        eq.entries(bal0 + trange * n_bus + (g.bus - 1), vidx("p_gen", trange, i, n_gen), 1.0)
    for m, w in enumerate(case.wind_farms):
        eq.entries(bal0 + trange * n_bus + (w.bus - 1), vidx("p_wind", trange, m, n_wind), 1.0)
    for j, agg in enumerate(case.aggregators):
        eq.entries(bal0 + trange * n_bus + (agg.bus - 1), vidx("p_dra", trange, j, n_agg), -1.0)
    bn = sp.coo_matrix(-case.mva_base * flow.nodal_susceptance)
    eq.entries(
        bal0 + (trange[:, None] * n_bus + bn.row[None, :]),
        sl["theta"].start + (trange[:, None] * n_bus + bn.col[None, :]),
        np.broadcast_to(bn.data, (T, bn.nnz)),
    )

    ref0 = eq.block("ref_angle", T, 0.0)
    eq.entries(ref0 + trange, vidx("theta", trange, 0, n_bus), 1.0)

    if include_appliances:
        agg0 = eq.block("agg_balance", T * n_agg, 0.0)
        eq.entries(
            agg0 + trange * n_agg + np.arange(n_agg)[:, None],
            vidx("p_dra", trange, np.arange(n_agg)[:, None], n_agg),
            -1.0,
        )
        for k, blk in enumerate(lay.appliance_blocks):
            cols = lay.appliance_starts[k] + np.arange(blk.slots.size)
            eq.entries(agg0 + blk.slots * n_agg + lay.appliance_agg[k], cols, 1.0)

        if lay.appliance_blocks:
            en0 = eq.block(
                "energy",
                len(lay.appliance_blocks),
                [b.energy_total for b in lay.appliance_blocks],
            )
            for k, blk in enumerate(lay.appliance_blocks):
                cols = lay.appliance_starts[k] + np.arange(blk.slots.size)
                eq.entries(en0 + k, cols, 1.0)

    if pin_wind is not None:
        pin = np.asarray(pin_wind, dtype=float)
        if pin.shape != (T, n_wind):
            raise ValueError(f"pin_wind is {pin.shape}, expected {(T, n_wind)}")
        pin0 = eq.block("wind_pin", T * n_wind, pin.ravel())
        eq.entries(pin0 + np.arange(T * n_wind), vcols("p_wind"), 1.0)

    # ---- inequalities ----------------------------------------------
    ineq = _Coo(lay.n_vars)

    gens = case.generators
    ghi0 = ineq.block("gen_hi", T * n_gen, np.tile([g.p_max for g in gens], T))
    ineq.entries(ghi0 + np.arange(T * n_gen), vcols("p_gen"), 1.0)
    glo0 = ineq.block("gen_lo", T * n_gen, np.tile([-g.p_min for g in gens], T))
    ineq.entries(glo0 + np.arange(T * n_gen), vcols("p_gen"), -1.0)

    rup = np.tile([g.ramp_up for g in gens], T).astype(float)
    rdn = np.tile([g.ramp_down for g in gens], T).astype(float)
    rup[:n_gen] += [g.p_initial for g in gens]
    rdn[:n_gen] -= [g.p_initial for g in gens]
    rup0 = ineq.block("ramp_up", T * n_gen, rup)
    ineq.entries(rup0 + np.arange(T * n_gen), vcols("p_gen"), 1.0)
    if T > 1:
        later = n_gen + np.arange((T - 1) * n_gen)
        ineq.entries(rup0 + later, sl["p_gen"].start + later - n_gen, -1.0)
    rdn0 = ineq.block("ramp_dn", T * n_gen, rdn)
    ineq.entries(rdn0 + np.arange(T * n_gen), vcols("p_gen"), -1.0)
    if T > 1:
        ineq.entries(rdn0 + later, sl["p_gen"].start + later - n_gen, 1.0)

    wcap = np.column_stack([w.p_commit_max for w in case.wind_farms]) if n_wind else np.zeros((T, 0))
    whi0 = ineq.block("wind_hi", T * n_wind, wcap.ravel())
    ineq.entries(whi0 + np.arange(T * n_wind), vcols("p_wind"), 1.0)
    wlo0 = ineq.block("wind_lo", T * n_wind, 0.0)
    ineq.entries(wlo0 + np.arange(T * n_wind), vcols("p_wind"), -1.0)

    if n_agg:
        dhi0 = ineq.block("dra_hi", T * n_agg, np.tile([a.p_dra_max for a in case.aggregators], T))
        ineq.entries(dhi0 + np.arange(T * n_agg), vcols("p_dra"), 1.0)
        dlo0 = ineq.block("dra_lo", T * n_agg, 0.0)
        ineq.entries(dlo0 + np.arange(T * n_agg), vcols("p_dra"), -1.0)

    if include_appliances and lay.appliance_blocks:
        hi = np.concatenate([np.full(b.slots.size, b.p_max) for b in lay.appliance_blocks])
        lo = np.concatenate([np.full(b.slots.size, -b.p_min) for b in lay.appliance_blocks])
        ahi0 = ineq.block("appl_hi", hi.size, hi)
        ineq.entries(ahi0 + np.arange(hi.size), vcols("appliance"), 1.0)
        alo0 = ineq.block("appl_lo", lo.size, lo)
        ineq.entries(alo0 + np.arange(lo.size), vcols("appliance"), -1.0)

    bf = case.mva_base * flow.angle_to_flow
    lim_hi = [(l, ln.flow_max) for l, ln in enumerate(case.lines) if ln.flow_max is not None]
    lim_lo = [(l, ln.flow_min) for l, ln in enumerate(case.lines) if ln.flow_min is not None]
    if lim_hi:
        fhi0 = ineq.block("flow_hi", T * len(lim_hi), np.repeat([v for _, v in lim_hi], T))
        for k, (l, _) in enumerate(lim_hi):
            nz = np.nonzero(bf[l])[0]
            ineq.entries(
                fhi0 + k * T + trange[:, None],
                sl["theta"].start + trange[:, None] * n_bus + nz[None, :],
                np.broadcast_to(bf[l, nz], (T, nz.size)),
            )
    if lim_lo:
        flo0 = ineq.block("flow_lo", T * len(lim_lo), np.repeat([-v for _, v in lim_lo], T))
        for k, (l, _) in enumerate(lim_lo):
            nz = np.nonzero(bf[l])[0]
            ineq.entries(
                flo0 + k * T + trange[:, None],
                sl["theta"].start + trange[:, None] * n_bus + nz[None, :],
                np.broadcast_to(-bf[l, nz], (T, nz.size)),
            )

    if risk is not None:
        ulo0 = ineq.block("u_lo", n_samp, 0.0)
        ineq.entries(ulo0 + np.arange(n_samp), vcols("u"), -1.0)

        w_flat = scenarios.samples.reshape(n_samp, T * n_wind)
        mid = prices.midpoint.ravel()
        tail_rhs = w_flat @ mid
        if has_spread:
            # Epigraph rows: e >= |p_wind - w| split into two one-sided rows
            # per scenario, slot, and farm.
            ntm = n_samp * T * n_wind
            pw_cols = np.tile(np.arange(sl["p_wind"].start, sl["p_wind"].stop), n_samp)
            ehi0 = ineq.block("e_hi", ntm, w_flat.ravel())
            ineq.entries(ehi0 + np.arange(ntm), pw_cols, 1.0)
            ineq.entries(ehi0 + np.arange(ntm), sl["e"].start + np.arange(ntm), -1.0)
            elo0 = ineq.block("e_lo", ntm, -w_flat.ravel())
            ineq.entries(elo0 + np.arange(ntm), pw_cols, -1.0)
            ineq.entries(elo0 + np.arange(ntm), sl["e"].start + np.arange(ntm), -1.0)

        tail0 = ineq.block("tail", n_samp, tail_rhs)
        srange = np.arange(n_samp)
        if has_spread:
            spread = prices.half_spread.ravel()
            ineq.entries(
                (tail0 + srange)[:, None],
                sl["e"].start + srange[:, None] * (T * n_wind) + np.arange(T * n_wind)[None, :],
                np.broadcast_to(spread, (n_samp, T * n_wind)),
            )
        ineq.entries(
            (tail0 + srange)[:, None],
            np.arange(sl["p_wind"].start, sl["p_wind"].stop)[None, :],
            np.broadcast_to(mid, (n_samp, T * n_wind)),
        )
        ineq.entries(tail0 + srange, sl["u"].start + srange, -1.0)
        ineq.entries(tail0 + srange, sl["eta"].start, -1.0)

    a_eq, b_eq = eq.build()
    a_in, h_in = ineq.build()
    lay.eq_slices = eq.slices
    lay.in_slices = ineq.slices

    qp = QuadraticProgram(
        Q=sp.diags(q_diag, format="csc"),
        c=c,
        A_eq=a_eq,
        b_eq=b_eq,
        A_in=a_in,
        h_in=h_in,
        var_slices=sl,
        row_slices={"eq": eq.slices, "in": ineq.slices},
    )
    return AssembledProblem(qp=qp, layout=lay, prox_rho=prox_rho, base_linear=c.copy())


def extract_primal(layout, x):
    """Split a solution vector into named device arrays.

    Appliance schedules come back as full-horizon vectors keyed by
    owner tuple, zero outside each window.
    """
    out = {
        "p_gen": layout.reshape(x, "p_gen", layout.n_gen),
        "p_wind": layout.reshape(x, "p_wind", layout.n_wind),
        "p_dra": layout.reshape(x, "p_dra", layout.n_agg),
        "theta": layout.reshape(x, "theta", layout.n_bus),
    }
    schedules = {}
    for k, blk in enumerate(layout.appliance_blocks):
        full = np.zeros(layout.horizon)
        full[blk.slots] = x[layout.appliance_starts[k] + np.arange(blk.slots.size)]
        schedules[layout.appliance_owners[k]] = full
    out["schedules"] = schedules
    if layout.include_risk:
        out["var_estimate"] = float(x[layout.var_slices["eta"].start])
        out["tail_excess"] = np.asarray(x[layout.var_slices["u"]])
    else:
        out["var_estimate"] = None
        out["tail_excess"] = None
    return out


def extract_prices(layout, duals_eq):
    """Price-signed duals: nodal prices and aggregator prices.

    Returns (lmps [T, N_bus], dra_prices [T, N_agg] or None); the
    latter exists only when aggregator balance rows were assembled.
    """
    lmps = -np.asarray(duals_eq[layout.eq_slices["balance"]]).reshape(
        layout.horizon, layout.n_bus
    )
    dra = None
    if "agg_balance" in layout.eq_slices:
        dra = np.asarray(duals_eq[layout.eq_slices["agg_balance"]]).reshape(
            layout.horizon, layout.n_agg
        )
    return lmps, dra
