"""File formats: JSON schemas, delimited tables, digests, manifests.

Every input format is a single JSON document with a ``format`` tag and
``version`` number.  Loaders are strict: wrong types, missing fields,
and unknown keys all raise :class:`SchemaError` with a JSON-pointer
style path, so a typo in a hand-edited case file points at itself.

Artifact directories always contain a ``manifest.json`` recording the
command, resolved parameters, input digests, and artifact names; the
manifest is serialized with sorted keys and no volatile fields (no
timestamps, no wall times), so re-running a command on identical
inputs reproduces it byte for byte.  Wall-clock timings go to a
separate ``timings.json`` that is excluded from reproducibility
comparisons.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os

import numpy as np

from . import __version__
from .clearing import DispatchSolution, TraceRow
from .errors import DigestMismatchError, SchemaError
from .grid import Aggregator, Appliance, Bus, Generator, Line, NetworkCase, WindFarm
from .qp import KktResiduals
from .risk import PriceSchedule
from .scenarios import ScenarioSet

CASE_FORMAT = "windclear-case"
PRICES_FORMAT = "windclear-prices"
SCENARIOS_FORMAT = "windclear-scenarios"
DISPATCH_FORMAT = "windclear-dispatch"
MANIFEST_FORMAT = "windclear-manifest"
FORMAT_VERSION = 1


# ---------------------------------------------------------------- schema


def _want(obj, ptr, fname, typ, what):
    if not isinstance(obj, typ):
        raise SchemaError(fname, f"{ptr}: expected {what}, got {type(obj).__name__}")
    return obj


def _want_num(obj, ptr, fname):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise SchemaError(fname, f"{ptr}: expected a number, got {type(obj).__name__}")
    return float(obj)


def _want_int(obj, ptr, fname):
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise SchemaError(fname, f"{ptr}: expected an integer, got {type(obj).__name__}")
    return obj


def _want_dict(obj, ptr, fname, required, optional=()):
    _want(obj, ptr, fname, dict, "an object")
    for key in required:
        if key not in obj:
            raise SchemaError(fname, f"{ptr}: missing required key {key!r}")
    for key in obj:
        if key not in required and key not in optional:
            raise SchemaError(fname, f"{ptr}.{key}: unknown key")
    return obj


def _want_numbers(obj, ptr, fname, length=None):
    _want(obj, ptr, fname, list, "an array")
    if length is not None and len(obj) != length:
        raise SchemaError(fname, f"{ptr}: expected {length} entries, got {len(obj)}")
    return np.array([_want_num(v, f"{ptr}[{i}]", fname) for i, v in enumerate(obj)])


def _want_matrix(obj, ptr, fname, rows, cols):
    _want(obj, ptr, fname, list, "an array of arrays")
    if len(obj) != rows:
        raise SchemaError(fname, f"{ptr}: expected {rows} rows, got {len(obj)}")
    return np.stack([_want_numbers(r, f"{ptr}[{i}]", fname, cols) for i, r in enumerate(obj)])


def _check_header(doc, fname, expected_format):
    _want(doc, "$", fname, dict, "an object")
    fmt = doc.get("format")
    if fmt != expected_format:
        raise SchemaError(fname, f"$.format: expected {expected_format!r}, got {fmt!r}")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise SchemaError(fname, f"$.version: unsupported version {version!r}")


def _read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(path, f"not valid JSON ({exc})") from exc


def _write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- case


def load_case(path):
    """Read a network case file into a :class:`NetworkCase`."""
    doc = _read_json(path)
    _check_header(doc, path, CASE_FORMAT)
    _want_dict(
        doc, "$", path,
        ("format", "version", "horizon", "mva_base", "buses", "lines",
         "generators", "wind_farms", "aggregators"),
    )
    T = _want_int(doc["horizon"], "$.horizon", path)
    mva = _want_num(doc["mva_base"], "$.mva_base", path)

    buses = []
    for i, raw in enumerate(_want(doc["buses"], "$.buses", path, list, "an array")):
        ptr = f"$.buses[{i}]"
        _want_dict(raw, ptr, path, ("id", "base_load"))
        buses.append(
            Bus(
                id=_want_int(raw["id"], f"{ptr}.id", path),
                base_load=_want_numbers(raw["base_load"], f"{ptr}.base_load", path, T),
            )
        )

    lines = []
    for i, raw in enumerate(_want(doc["lines"], "$.lines", path, list, "an array")):
        ptr = f"$.lines[{i}]"
        _want_dict(raw, ptr, path, ("from_bus", "to_bus", "reactance_pu"), ("flow_min", "flow_max"))
        lines.append(
            Line(
                from_bus=_want_int(raw["from_bus"], f"{ptr}.from_bus", path),
                to_bus=_want_int(raw["to_bus"], f"{ptr}.to_bus", path),
                reactance_pu=_want_num(raw["reactance_pu"], f"{ptr}.reactance_pu", path),
                flow_min=None if raw.get("flow_min") is None
                else _want_num(raw["flow_min"], f"{ptr}.flow_min", path),
                flow_max=None if raw.get("flow_max") is None
                else _want_num(raw["flow_max"], f"{ptr}.flow_max", path),
            )
        )

    gens = []
    for i, raw in enumerate(_want(doc["generators"], "$.generators", path, list, "an array")):
        ptr = f"$.generators[{i}]"
        _want_dict(
            raw, ptr, path,
            ("bus", "cost_a", "cost_b", "p_min", "p_max", "ramp_up", "ramp_down"),
            ("p_initial",),
        )
        gens.append(
            Generator(
                bus=_want_int(raw["bus"], f"{ptr}.bus", path),
                cost_a=_want_num(raw["cost_a"], f"{ptr}.cost_a", path),
                cost_b=_want_num(raw["cost_b"], f"{ptr}.cost_b", path),
                p_min=_want_num(raw["p_min"], f"{ptr}.p_min", path),
                p_max=_want_num(raw["p_max"], f"{ptr}.p_max", path),
                ramp_up=_want_num(raw["ramp_up"], f"{ptr}.ramp_up", path),
                ramp_down=_want_num(raw["ramp_down"], f"{ptr}.ramp_down", path),
                p_initial=None if raw.get("p_initial") is None
                else _want_num(raw["p_initial"], f"{ptr}.p_initial", path),
            )
        )

    farms = []
    for i, raw in enumerate(_want(doc["wind_farms"], "$.wind_farms", path, list, "an array")):
        ptr = f"$.wind_farms[{i}]"
        _want_dict(raw, ptr, path, ("bus", "p_commit_max"))
        farms.append(
            WindFarm(
                bus=_want_int(raw["bus"], f"{ptr}.bus", path),
                p_commit_max=_want_numbers(raw["p_commit_max"], f"{ptr}.p_commit_max", path, T),
            )
        )

    aggs = []
    for j, raw in enumerate(_want(doc["aggregators"], "$.aggregators", path, list, "an array")):
        ptr = f"$.aggregators[{j}]"
        _want_dict(raw, ptr, path, ("bus", "p_dra_max", "users"))
        appliances = []
        for u, uraw in enumerate(_want(raw["users"], f"{ptr}.users", path, list, "an array")):
            uptr = f"{ptr}.users[{u}]"
            _want_dict(uraw, uptr, path, ("id", "appliances"))
            uid = _want_int(uraw["id"], f"{uptr}.id", path)
            for a, araw in enumerate(
                _want(uraw["appliances"], f"{uptr}.appliances", path, list, "an array")
            ):
                aptr = f"{uptr}.appliances[{a}]"
                _want_dict(
                    araw, aptr, path,
                    ("id", "energy_total", "p_min", "p_max", "t_start", "t_end"),
                    ("utility_curvature", "utility_slope"),
                )
                appliances.append(
                    Appliance(
                        owner=(j + 1, uid, _want_int(araw["id"], f"{aptr}.id", path)),
                        energy_total=_want_num(araw["energy_total"], f"{aptr}.energy_total", path),
                        p_min=_want_num(araw["p_min"], f"{aptr}.p_min", path),
                        p_max=_want_num(araw["p_max"], f"{aptr}.p_max", path),
                        t_start=_want_int(araw["t_start"], f"{aptr}.t_start", path),
                        t_end=_want_int(araw["t_end"], f"{aptr}.t_end", path),
                        utility_curvature=_want_num(
                            araw.get("utility_curvature", 0.0), f"{aptr}.utility_curvature", path
                        ),
                        utility_slope=_want_num(
                            araw.get("utility_slope", 0.0), f"{aptr}.utility_slope", path
                        ),
                    )
                )
        aggs.append(
            Aggregator(
                bus=_want_int(raw["bus"], f"{ptr}.bus", path),
                p_dra_max=_want_num(raw["p_dra_max"], f"{ptr}.p_dra_max", path),
                appliances=appliances,
            )
        )

    return NetworkCase(
        horizon=T, mva_base=mva, buses=buses, lines=lines,
        generators=gens, wind_farms=farms, aggregators=aggs,
    )


def save_case(case, path):
    """Write a :class:`NetworkCase` as a case file (lossless round trip)."""
    aggs = []
    for agg in case.aggregators:
        users = {}
        for a in agg.appliances:
            _, uid, aid = a.owner
            entry = {
                "id": aid,
                "energy_total": a.energy_total,
                "p_min": a.p_min,
                "p_max": a.p_max,
                "t_start": a.t_start,
                "t_end": a.t_end,
            }
            if a.utility_curvature or a.utility_slope:
                entry["utility_curvature"] = a.utility_curvature
                entry["utility_slope"] = a.utility_slope
            users.setdefault(uid, []).append(entry)
        aggs.append(
            {
                "bus": agg.bus,
                "p_dra_max": agg.p_dra_max,
                "users": [{"id": uid, "appliances": apps} for uid, apps in users.items()],
            }
        )
    doc = {
        "format": CASE_FORMAT,
        "version": FORMAT_VERSION,
        "horizon": case.horizon,
        "mva_base": case.mva_base,
        "buses": [{"id": b.id, "base_load": b.base_load.tolist()} for b in case.buses],
        "lines": [
            {
                "from_bus": ln.from_bus,
                "to_bus": ln.to_bus,
                "reactance_pu": ln.reactance_pu,
                **({"flow_min": ln.flow_min} if ln.flow_min is not None else {}),
                **({"flow_max": ln.flow_max} if ln.flow_max is not None else {}),
            }
            for ln in case.lines
        ],
        "generators": [
            {
                "bus": g.bus,
                "cost_a": g.cost_a,
                "cost_b": g.cost_b,
                "p_min": g.p_min,
                "p_max": g.p_max,
                "ramp_up": g.ramp_up,
                "ramp_down": g.ramp_down,
                "p_initial": g.p_initial,
            }
            for g in case.generators
        ],
        "wind_farms": [
            {"bus": w.bus, "p_commit_max": w.p_commit_max.tolist()} for w in case.wind_farms
        ],
        "aggregators": aggs,
    }
    _write_json(doc, path)


# ---------------------------------------------------------------- prices


def load_prices(path):
    doc = _read_json(path)
    _check_header(doc, path, PRICES_FORMAT)
    _want_dict(doc, "$", path, ("format", "version", "purchase", "sell"))
    purchase = _want(doc["purchase"], "$.purchase", path, list, "an array of arrays")
    T = len(purchase)
    if T == 0:
        raise SchemaError(path, "$.purchase: must have at least one slot")
    nw = len(_want(purchase[0], "$.purchase[0]", path, list, "an array"))
    return PriceSchedule(
        purchase=_want_matrix(doc["purchase"], "$.purchase", path, T, nw),
        sell=_want_matrix(doc["sell"], "$.sell", path, T, nw),
    )


def save_prices(prices, path):
    _write_json(
        {
            "format": PRICES_FORMAT,
            "version": FORMAT_VERSION,
            "purchase": prices.purchase.tolist(),
            "sell": prices.sell.tolist(),
        },
        path,
    )


# ---------------------------------------------------------------- scenarios


def load_scenarios(path):
    doc = _read_json(path)
    _check_header(doc, path, SCENARIOS_FORMAT)
    _want_dict(doc, "$", path, ("format", "version", "forecast", "samples"), ("seed", "sigma"))
    forecast = _want(doc["forecast"], "$.forecast", path, list, "an array of arrays")
    T = len(forecast)
    if T == 0:
        raise SchemaError(path, "$.forecast: must have at least one slot")
    nw = len(_want(forecast[0], "$.forecast[0]", path, list, "an array"))
    fc = _want_matrix(doc["forecast"], "$.forecast", path, T, nw)
    raw_samples = _want(doc["samples"], "$.samples", path, list, "an array")
    samples = np.stack(
        [_want_matrix(s, f"$.samples[{i}]", path, T, nw) for i, s in enumerate(raw_samples)]
    ) if raw_samples else np.zeros((0, T, nw))
    seed = doc.get("seed")
    if seed is not None:
        seed = _want_int(seed, "$.seed", path)
    sigma = doc.get("sigma")
    if sigma is not None:
        sigma = (
            _want_matrix(sigma, "$.sigma", path, T, nw)
            if isinstance(sigma, list)
            else _want_num(sigma, "$.sigma", path)
        )
    try:
        return ScenarioSet(forecast=fc, samples=samples, seed=seed, sigma=sigma)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from exc


def save_scenarios(scenarios, path):
    sigma = scenarios.sigma
    if isinstance(sigma, np.ndarray):
        sigma = sigma.tolist()
    _write_json(
        {
            "format": SCENARIOS_FORMAT,
            "version": FORMAT_VERSION,
            "seed": scenarios.seed,
            "sigma": sigma,
            "forecast": scenarios.forecast.tolist(),
            "samples": scenarios.samples.tolist(),
        },
        path,
    )


# ---------------------------------------------------------------- dispatch


def save_solution(solution, path):
    """Persist a :class:`DispatchSolution`.

    Wall-clock times are not part of the persisted solution; the trace
    keeps (iteration, objective, primal residual) only, so identical
    runs produce identical files.
    """
    doc = {
        "format": DISPATCH_FORMAT,
        "version": FORMAT_VERSION,
        "mode": solution.mode,
        "status": solution.status,
        "objective": solution.objective,
        "iterations": solution.iterations,
        "p_gen": solution.p_gen.tolist(),
        "p_wind": solution.p_wind.tolist(),
        "p_dra": solution.p_dra.tolist(),
        "theta": solution.theta.tolist(),
        "lmps": solution.lmps.tolist(),
        "dra_prices": solution.dra_prices.tolist(),
        "var_estimate": solution.var_estimate,
        "tail_excess": None if solution.tail_excess is None else solution.tail_excess.tolist(),
        "schedules": {
            ":".join(map(str, owner)): p.tolist() for owner, p in solution.schedules.items()
        },
        "kkt": {
            "stationarity": solution.kkt.stationarity,
            "primal_eq": solution.kkt.primal_eq,
            "primal_in": solution.kkt.primal_in,
            "complementarity": solution.kkt.complementarity,
        },
        "trace": [[r.iteration, r.objective, r.primal_residual] for r in solution.trace],
    }
    _write_json(doc, path)


def load_solution(path):
    doc = _read_json(path)
    _check_header(doc, path, DISPATCH_FORMAT)
    keys = (
        "format", "version", "mode", "status", "objective", "iterations",
        "p_gen", "p_wind", "p_dra", "theta", "lmps", "dra_prices",
        "var_estimate", "tail_excess", "schedules", "kkt", "trace",
    )
    _want_dict(doc, "$", path, keys)

    def arr(key):
        rows = _want(doc[key], f"$.{key}", path, list, "an array of arrays")
        return np.array([[_want_num(v, f"$.{key}", path) for v in row] for row in rows])

    schedules = {}
    for key, row in _want(doc["schedules"], "$.schedules", path, dict, "an object").items():
        parts = key.split(":")
        if len(parts) != 3:
            raise SchemaError(path, f"$.schedules.{key}: owner key must be agg:user:appliance")
        schedules[tuple(int(p) for p in parts)] = _want_numbers(
            row, f"$.schedules.{key}", path
        )
    kkt = _want_dict(
        doc["kkt"], "$.kkt", path,
        ("stationarity", "primal_eq", "primal_in", "complementarity"),
    )
    trace = [
        TraceRow(int(r[0]), float(r[1]), float(r[2]), 0.0)
        for r in _want(doc["trace"], "$.trace", path, list, "an array")
    ]
    return DispatchSolution(
        mode=doc["mode"],
        status=doc["status"],
        objective=_want_num(doc["objective"], "$.objective", path),
        p_gen=arr("p_gen"),
        p_wind=arr("p_wind"),
        p_dra=arr("p_dra"),
        theta=arr("theta"),
        schedules=schedules,
        lmps=arr("lmps"),
        dra_prices=arr("dra_prices"),
        var_estimate=None if doc["var_estimate"] is None
        else _want_num(doc["var_estimate"], "$.var_estimate", path),
        tail_excess=None if doc["tail_excess"] is None
        else _want_numbers(doc["tail_excess"], "$.tail_excess", path),
        iterations=_want_int(doc["iterations"], "$.iterations", path),
        trace=trace,
        kkt=KktResiduals(
            stationarity=float(kkt["stationarity"]),
            primal_eq=float(kkt["primal_eq"]),
            primal_in=float(kkt["primal_in"]),
            complementarity=float(kkt["complementarity"]),
        ),
    )


# ---------------------------------------------------------------- tables


def _write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_schedule_csv(path, label, matrix):
    """Per-slot table: one row per slot, one column per device."""
    matrix = np.asarray(matrix)
    header = ["slot"] + [f"{label}{i + 1}" for i in range(matrix.shape[1])]
    rows = [[t + 1] + [float(v) for v in matrix[t]] for t in range(matrix.shape[0])]
    _write_table(path, header, rows)


def write_appliances_csv(path, schedules, horizon):
    header = ["aggregator", "user", "appliance"] + [f"slot{t + 1}" for t in range(horizon)]
    rows = []
    for owner in sorted(schedules):
        rows.append(list(owner) + [float(v) for v in schedules[owner]])
    _write_table(path, header, rows)


def write_trace_csv(path, trace):
    _write_table(
        path,
        ["iteration", "objective", "primal_residual", "wall_ms"],
        [[r.iteration, r.objective, r.primal_residual, r.wall_ms] for r in trace],
    )


def write_costs_csv(path, distribution):
    _write_table(
        path,
        ["sample", "cost"],
        [[i + 1, float(v)] for i, v in enumerate(distribution.samples)],
    )


def write_sweep_csv(path, rows):
    _write_table(
        path,
        ["mu", "generation_cost", "utility", "risk_term", "objective"],
        [[r.mu, r.generation_cost, r.utility, r.risk_term, r.objective] for r in rows],
    )


def dispatch_artifacts(outdir, solution, case):
    """Write the dispatch JSON plus its delimited mirrors; return names."""
    names = ["dispatch.json"]
    save_solution(solution, os.path.join(outdir, "dispatch.json"))
    for name, label, mat in (
        ("p_gen.csv", "g", solution.p_gen),
        ("p_wind.csv", "w", solution.p_wind),
        ("p_dra.csv", "a", solution.p_dra),
        ("theta.csv", "bus", solution.theta),
        ("lmps.csv", "bus", solution.lmps),
        ("dra_prices.csv", "a", solution.dra_prices),
    ):
        write_schedule_csv(os.path.join(outdir, name), label, mat)
        names.append(name)
    write_appliances_csv(os.path.join(outdir, "appliances.csv"), solution.schedules, case.horizon)
    names.append("appliances.csv")
    write_trace_csv(os.path.join(outdir, "trace.csv"), solution.trace)
    names.append("trace.csv")
    return names


# ---------------------------------------------------------------- manifest


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(outdir, command, parameters, inputs, artifacts):
    """Record how an artifact directory was produced.

    ``inputs`` maps role names to file paths; their digests pin the
    exact bytes consumed.  The manifest itself is deterministic.
    """
    doc = {
        "format": MANIFEST_FORMAT,
        "version": FORMAT_VERSION,
        "package_version": __version__,
        "command": command,
        "parameters": parameters,
        "inputs": {
            role: {"path": os.path.abspath(p), "sha256": sha256_file(p)}
            for role, p in inputs.items()
        },
        "artifacts": sorted(artifacts),
    }
    path = os.path.join(outdir, "manifest.json")
    _write_json(doc, path)
    return path


def load_manifest(path):
    doc = _read_json(path)
    _check_header(doc, path, MANIFEST_FORMAT)
    return doc


def manifest_input(manifest, manifest_path, role, override=None):
    """Resolve and digest-check one recorded input file.

    Returns the path to read.  ``override`` substitutes a caller-given
    path but is still held to the recorded digest: consuming an
    artifact together with different inputs is an error, not a silent
    reinterpretation.
    """
    inputs = manifest.get("inputs", {})
    if role not in inputs:
        raise SchemaError(manifest_path, f"$.inputs.{role}: not recorded")
    entry = inputs[role]
    path = override or entry["path"]
    if not os.path.exists(path):
        raise FileNotFoundError(f"{role} input {path} is missing")
    actual = sha256_file(path)
    if actual != entry["sha256"]:
        raise DigestMismatchError(
            f"{role} input {path} has digest {actual[:12]}..., manifest "
            f"recorded {entry['sha256'][:12]}..."
        )
    return path
