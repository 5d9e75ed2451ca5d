"""Network model: instance types, validation, and DC flow matrices.

Power fields are MW, energies MWh, reactances per-unit on the case
MVA base, and prices $/MWh.  Bus ids and time slots are 1-based to
match the case-file format; matrix builders convert to 0-based row
and column indices internally.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError


@dataclass
class Bus:
    """Network node with a fixed (non-responsive) base-load profile."""

    id: int
    base_load: np.ndarray  # [T] MW, >= 0

    def __post_init__(self):
        self.base_load = np.asarray(self.base_load, dtype=float)


@dataclass
class Line:
    """Transmission line between two buses.

    Flow limits are optional; ``None`` means the line is treated as
    unconstrained in the clearing problem.
    """

    from_bus: int
    to_bus: int
    reactance_pu: float
    flow_min: float | None = None  # MW, signed
    flow_max: float | None = None  # MW, signed


@dataclass
class Generator:
    """Conventional unit with quadratic cost a*p^2 + b*p.

    ``p_initial`` anchors the first-slot ramp constraints; it defaults
    to the technical minimum when the case file omits it.
    """

    bus: int
    cost_a: float  # $/MW^2 h
    cost_b: float  # $/MWh
    p_min: float
    p_max: float
    ramp_up: float    # MW per slot
    ramp_down: float  # MW per slot
    p_initial: float | None = None

    def __post_init__(self):
        if self.p_initial is None:
            self.p_initial = self.p_min


@dataclass
class WindFarm:
    """Wind producer; commitments are bounded per slot by ``p_commit_max``."""

    bus: int
    p_commit_max: np.ndarray  # [T] MW

    def __post_init__(self):
        self.p_commit_max = np.asarray(self.p_commit_max, dtype=float)


@dataclass
class Appliance:
    """Deferrable load owned by one user under one aggregator.

    The appliance must draw exactly ``energy_total`` MWh inside the
    slot window [t_start, t_end], within per-slot power bounds, and
    nothing outside it.  ``utility_curvature`` g and ``utility_slope``
    d define the consumption benefit U(p) = -g/2 * p^2 + d * p per
    slot; both default to zero (pure scheduling, no elastic benefit).
    """

    owner: tuple[int, int, int]  # (aggregator id, user id, appliance id)
    energy_total: float          # MWh
    p_min: float                 # MW
    p_max: float                 # MW
    t_start: int                 # first admissible slot, 1-based
    t_end: int                   # last admissible slot, inclusive
    utility_curvature: float = 0.0
    utility_slope: float = 0.0


@dataclass
class Aggregator:
    """Demand-response aggregator: a bus, a headroom cap, and members."""

    bus: int
    p_dra_max: float  # MW cap on aggregate consumption per slot
    appliances: list[Appliance] = field(default_factory=list)


@dataclass
class NetworkCase:
    """Complete clearing instance for one day."""

    horizon: int  # number of slots T
    mva_base: float
    buses: list[Bus]
    lines: list[Line]
    generators: list[Generator]
    wind_farms: list[WindFarm]
    aggregators: list[Aggregator]

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_gen(self):
        return len(self.generators)

    @property
    def n_wind(self):
        return len(self.wind_farms)

    @property
    def n_agg(self):
        return len(self.aggregators)

    def base_load_matrix(self):
        """Stack bus base loads into a [T, N_bus] array."""
        return np.column_stack([b.base_load for b in self.buses])

    def all_appliances(self):
        """Flat list of appliances across aggregators, in file order."""
        out = []
        for agg in self.aggregators:
            out.extend(agg.appliances)
        return out


@dataclass
class FlowMatrices:
    """DC power-flow operators for a validated case.

    With the convention that a line's susceptance is b = -1/x, the
    nodal matrix ``nodal_susceptance`` equals the 1/x-weighted graph
    Laplacian: positive semidefinite with null space spanned by the
    all-ones vector on a connected network.  ``angle_to_flow`` maps
    bus angles (rad) to per-unit line flows oriented from -> to.
    Multiply per-unit flows by the case MVA base to get MW.
    """

    incidence: np.ndarray            # A_n [N_l, N_bus], +1 at from, -1 at to
    branch_susceptance: np.ndarray   # B_s [N_l, N_l] diagonal, entries -1/x
    nodal_susceptance: np.ndarray    # B_n = -A_n' B_s A_n  [N_bus, N_bus]
    angle_to_flow: np.ndarray        # B_f = -B_s A_n  [N_l, N_bus]
    gen_incidence: np.ndarray        # A_g [N_bus, N_gen]
    wind_incidence: np.ndarray       # A_w [N_bus, N_wind]
    aggregator_incidence: np.ndarray  # A_a [N_bus, N_agg]


def build_flow_matrices(case):
    """Construct incidence and susceptance matrices for ``case``.

    Parameters
    ----------
    case : NetworkCase
        Must satisfy :func:`validate_case`; in particular bus ids are
        contiguous 1..N and every line reactance is positive.

    Returns
    -------
    FlowMatrices
    """
    n_bus = case.n_bus
    n_line = len(case.lines)

    a_n = np.zeros((n_line, n_bus))
    b_diag = np.zeros(n_line)
    for k, ln in enumerate(case.lines):
        a_n[k, ln.from_bus - 1] = 1.0
        a_n[k, ln.to_bus - 1] = -1.0
        b_diag[k] = -1.0 / ln.reactance_pu

    b_s = np.diag(b_diag)
    b_n = -a_n.T @ b_s @ a_n
    b_f = -b_s @ a_n

    def incidence_of(devices):
        m = np.zeros((n_bus, len(devices)))
        for j, dev in enumerate(devices):
            m[dev.bus - 1, j] = 1.0
        return m

    return FlowMatrices(
        incidence=a_n,
        branch_susceptance=b_s,
        nodal_susceptance=b_n,
        angle_to_flow=b_f,
        gen_incidence=incidence_of(case.generators),
        wind_incidence=incidence_of(case.wind_farms),
        aggregator_incidence=incidence_of(case.aggregators),
    )


def validate_case(case, raise_on_error=True):
    """Check every structural invariant of a clearing instance.

    Returns the full list of violations as ``"path: message"`` strings
    so a user can fix a case file in one pass.  With the default
    ``raise_on_error`` a non-empty list becomes a ValidationError.
    """
    v = []
    T = case.horizon
    if T < 1:
        v.append("horizon: must be at least 1 slot")
    if not case.mva_base > 0:
        v.append("mva_base: must be positive")

    ids = [b.id for b in case.buses]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        v.append("buses: ids must be contiguous 1..N")
    known = set(ids)

    for i, bus in enumerate(case.buses):
        path = f"buses[{i}]"
        if bus.base_load.shape != (T,):
            v.append(f"{path}.base_load: expected {T} slots, got {bus.base_load.shape}")
        elif np.any(bus.base_load < 0):
            v.append(f"{path}.base_load: negative entries")

    for i, ln in enumerate(case.lines):
        path = f"lines[{i}]"
        if ln.from_bus not in known or ln.to_bus not in known:
            v.append(f"{path}: endpoint references unknown bus")
        if ln.from_bus == ln.to_bus:
            v.append(f"{path}: self-loop")
        if not ln.reactance_pu > 0:
            v.append(f"{path}.reactance_pu: must be positive")
        if ln.flow_min is not None and ln.flow_max is not None and ln.flow_min > ln.flow_max:
            v.append(f"{path}: flow_min exceeds flow_max")

    if not case.generators:
        v.append("generators: at least one unit is required")
    for i, g in enumerate(case.generators):
        path = f"generators[{i}]"
        if g.bus not in known:
            v.append(f"{path}.bus: unknown bus {g.bus}")
        if g.cost_a < 0:
            v.append(f"{path}.cost_a: negative quadratic cost breaks convexity")
        if not 0 <= g.p_min <= g.p_max:
            v.append(f"{path}: requires 0 <= p_min <= p_max")
        if g.ramp_up < 0 or g.ramp_down < 0:
            v.append(f"{path}: ramp rates must be nonnegative")
        if not g.p_min <= g.p_initial <= g.p_max:
            v.append(f"{path}.p_initial: outside [p_min, p_max]")

    for i, w in enumerate(case.wind_farms):
        path = f"wind_farms[{i}]"
        if w.bus not in known:
            v.append(f"{path}.bus: unknown bus {w.bus}")
        if w.p_commit_max.shape != (T,):
            v.append(f"{path}.p_commit_max: expected {T} slots")
        elif np.any(w.p_commit_max < 0):
            v.append(f"{path}.p_commit_max: negative entries")

    for j, agg in enumerate(case.aggregators):
        path = f"aggregators[{j}]"
        if agg.bus not in known:
            v.append(f"{path}.bus: unknown bus {agg.bus}")
        if agg.p_dra_max < 0:
            v.append(f"{path}.p_dra_max: must be nonnegative")
        for a in agg.appliances:
            apath = f"{path}.appliance{a.owner}"
            if not (1 <= a.t_start <= a.t_end <= T):
                v.append(f"{apath}: window [{a.t_start}, {a.t_end}] outside 1..{T}")
                continue
            span = a.t_end - a.t_start + 1
            if not 0 <= a.p_min <= a.p_max:
                v.append(f"{apath}: requires 0 <= p_min <= p_max")
            if not span * a.p_min <= a.energy_total <= span * a.p_max:
                v.append(
                    f"{apath}: energy {a.energy_total} unreachable in window "
                    f"({span} slots, {a.p_min}..{a.p_max} MW)"
                )
            if a.utility_curvature < 0:
                v.append(f"{apath}.utility_curvature: negative value breaks concavity")

    if not v and case.lines:
        # Nodal prices are only meaningful on a connected network.
        n = case.n_bus
        rows = [ln.from_bus - 1 for ln in case.lines]
        cols = [ln.to_bus - 1 for ln in case.lines]
        adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        ncomp = sp.csgraph.connected_components(adj, directed=False, return_labels=False)
        if ncomp != 1:
            v.append(f"lines: network has {ncomp} islands, expected a connected grid")

    if v and raise_on_error:
        raise ValidationError(v)
    return v


@dataclass
class ApplianceBlock:
    """Feasible-consumption description of one appliance.

    Encodes the linear constraint block used by the schedulers: total
    energy over the window is fixed, each in-window slot is boxed in
    [p_min, p_max], and every slot outside the window is pinned to
    zero.  ``slots`` holds the 0-based indices of the window.
    """

    horizon: int
    slots: np.ndarray
    energy_total: float
    p_min: float
    p_max: float

    def as_dense(self):
        """Return (a_eq, b_eq, lower, upper) over the full horizon."""
        a_eq = np.zeros(self.horizon)
        a_eq[self.slots] = 1.0
        lower = np.zeros(self.horizon)
        upper = np.zeros(self.horizon)
        lower[self.slots] = self.p_min
        upper[self.slots] = self.p_max
        return a_eq, self.energy_total, lower, upper

    def contains(self, p, tol=1e-9):
        """Membership test for a full-horizon schedule ``p``."""
        p = np.asarray(p, dtype=float)
        if p.shape != (self.horizon,):
            return False
        _, _, lower, upper = self.as_dense()
        if np.any(p < lower - tol) or np.any(p > upper + tol):
            return False
        return abs(p.sum() - self.energy_total) <= tol * max(1.0, abs(self.energy_total))


def appliance_constraints(appliance, horizon):
    """Build the :class:`ApplianceBlock` for one appliance.

    Raises ValueError when the window or bounds are inconsistent, the
    same conditions :func:`validate_case` reports for a full case.
    """
    a = appliance
    if not (1 <= a.t_start <= a.t_end <= horizon):
        raise ValueError(f"appliance {a.owner}: window outside 1..{horizon}")
    if not 0 <= a.p_min <= a.p_max:
        raise ValueError(f"appliance {a.owner}: requires 0 <= p_min <= p_max")
    span = a.t_end - a.t_start + 1
    if not span * a.p_min <= a.energy_total <= span * a.p_max:
        raise ValueError(f"appliance {a.owner}: energy target unreachable in window")
    slots = np.arange(a.t_start - 1, a.t_end)
    return ApplianceBlock(
        horizon=horizon,
        slots=slots,
        energy_total=a.energy_total,
        p_min=a.p_min,
        p_max=a.p_max,
    )
