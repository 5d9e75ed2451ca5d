"""Command line entry points.

Subcommands::

    windclear validate     check a case file and report every violation
    windclear clear        run the day-ahead clearing and write artifacts
    windclear evaluate     re-price a cleared dispatch on fresh scenarios
    windclear sweep-mu     re-solve across risk weights
    windclear make-bundle  write the bundled six-bus study inputs

Exit codes: 0 success, 1 invalid input data, 2 unreadable or
mismatched files, 3 solver failure or non-convergence.  Artifact
directories get a deterministic ``manifest.json``; wall-clock timings
go to ``timings.json`` which is the only volatile artifact.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .clearing import MODE_ADMM, MODE_CENTRAL, ClearingConfig, solve_clearing
from .errors import ConvexityError, DigestMismatchError, SchemaError, SolverError, ValidationError
from .evaluation import ALL_POLICIES, POLICY_CVAR, PolicySpec, evaluate_policy, sweep_mu
from .fileio import (
    FORMAT_VERSION,
    _write_json,
    dispatch_artifacts,
    load_case,
    load_manifest,
    load_prices,
    load_scenarios,
    load_solution,
    manifest_input,
    save_case,
    save_prices,
    save_scenarios,
    write_costs_csv,
    write_manifest,
    write_sweep_csv,
)
from .grid import validate_case
from .risk import RiskConfig, check_convexity_condition
from .scenarios import default_sigma, generate_scenarios
from .wecc6 import build_bundle


def _outdir(args):
    out = args.out or os.environ.get("WINDCLEAR_OUT") or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _load_inputs(args):
    case = load_case(args.case)
    validate_case(case)
    prices = load_prices(args.prices)
    scenarios = load_scenarios(args.scenarios)
    if not check_convexity_condition(prices):
        raise ConvexityError("sell price exceeds purchase price somewhere")
    return case, prices, scenarios


def _config(args, mode=None):
    return ClearingConfig(
        risk=RiskConfig(beta=args.beta, mu=args.mu),
        mode=mode or args.mode,
        rho=args.rho,
        eps_primal=args.eps_primal,
        max_admm_iter=args.max_iter,
        threads=args.threads,
    )


def _risk_params(config):
    return {
        "beta": config.risk.beta,
        "mu": config.risk.mu,
        "mode": config.mode,
        "rho": config.rho,
        "eps_primal": config.eps_primal,
        "max_admm_iter": config.max_admm_iter,
    }


# ---------------------------------------------------------------- commands


def cmd_validate(args):
    case = load_case(args.case)
    violations = validate_case(case, raise_on_error=False)
    if args.prices:
        prices = load_prices(args.prices)
        if prices.purchase.shape != (case.horizon, case.n_wind):
            violations = violations + [
                f"prices: shape {list(prices.purchase.shape)} does not match "
                f"horizon {case.horizon} x {case.n_wind} wind farms"
            ]
        if not check_convexity_condition(prices):
            violations = violations + ["prices: sell price exceeds purchase price somewhere"]
    if args.scenarios:
        scenarios = load_scenarios(args.scenarios)
        if scenarios.forecast.shape != (case.horizon, case.n_wind):
            violations = violations + [
                f"scenarios: shape {list(scenarios.forecast.shape)} does not match "
                f"horizon {case.horizon} x {case.n_wind} wind farms"
            ]
    if violations:
        for line in violations:
            print(line)
        return 1
    print(f"{args.case}: ok "
          f"({case.n_bus} buses, {case.n_gen} generators, {case.n_wind} wind farms, "
          f"{case.n_agg} aggregators, horizon {case.horizon})")
    return 0


def cmd_clear(args):
    case, prices, scenarios = _load_inputs(args)
    config = _config(args)
    outdir = _outdir(args)

    start = time.perf_counter()
    solution = solve_clearing(case, prices, scenarios, config)
    solve_s = time.perf_counter() - start

    artifacts = dispatch_artifacts(outdir, solution, case)
    if not args.no_figures:
        from . import plots

        artifacts.append(plots.plot_dispatch(outdir, solution, case))
        artifacts.append(plots.plot_prices(outdir, solution))
        if solution.trace:
            artifacts.append(plots.plot_convergence(outdir, solution.trace))
    artifacts.append("timings.json")
    _write_json({"solve_s": solve_s}, os.path.join(outdir, "timings.json"))
    write_manifest(
        outdir,
        command="clear",
        parameters=_risk_params(config),
        inputs={"case": args.case, "prices": args.prices, "scenarios": args.scenarios},
        artifacts=artifacts + ["manifest.json"],
    )
    print(f"{solution.mode}: {solution.status}, objective {solution.objective:.4f}, "
          f"{solution.iterations} iterations -> {outdir}")
    if solution.status not in ("optimal", "converged"):
        return 3
    return 0


def cmd_evaluate(args):
    manifest_path = os.path.join(args.artifacts, "manifest.json")
    manifest = load_manifest(manifest_path)
    case = load_case(manifest_input(manifest, manifest_path, "case", args.case))
    validate_case(case)
    prices = load_prices(manifest_input(manifest, manifest_path, "prices", args.prices))
    if not check_convexity_condition(prices):
        raise ConvexityError("sell price exceeds purchase price somewhere")
    da_scenarios = load_scenarios(
        manifest_input(manifest, manifest_path, "scenarios", args.scenarios)
    )
    dispatch = load_solution(os.path.join(args.artifacts, "dispatch.json"))
    beta = float(manifest["parameters"]["beta"])
    mu = float(manifest["parameters"]["mu"])

    sigma = da_scenarios.sigma
    if sigma is None:
        sigma = default_sigma(da_scenarios.forecast)
    eval_scenarios = generate_scenarios(da_scenarios.forecast, sigma, args.samples, args.seed)
    config = ClearingConfig(risk=RiskConfig(beta=beta, mu=mu), mode=MODE_CENTRAL)
    policies = [PolicySpec(p) for p in args.policies.split(",")]

    outdir = _outdir(args)
    artifacts = []
    distributions = []
    summary = {
        "format": "windclear-evaluation",
        "version": FORMAT_VERSION,
        "beta": beta,
        "samples": args.samples,
        "seed": args.seed,
        "policies": {},
    }
    for spec in policies:
        dist = evaluate_policy(
            spec, case, prices, eval_scenarios,
            dispatch=dispatch if spec.kind == POLICY_CVAR else None,
            config=config,
        )
        distributions.append(dist)
        var, cvar = dist.var_cvar(beta)
        summary["policies"][spec.kind] = {
            "mean": dist.mean,
            "std": dist.std,
            "var": var,
            "cvar": cvar,
            "n": int(dist.samples.size),
        }
        name = f"costs_{spec.kind}.csv"
        write_costs_csv(os.path.join(outdir, name), dist)
        artifacts.append(name)
    _write_json(summary, os.path.join(outdir, "evaluation.json"))
    artifacts.append("evaluation.json")
    if not args.no_figures:
        from . import plots

        artifacts.append(plots.plot_cost_cdf(outdir, distributions, beta=beta))
    write_manifest(
        outdir,
        command="evaluate",
        parameters={"beta": beta, "mu": mu, "samples": args.samples, "seed": args.seed,
                    "policies": args.policies},
        inputs={"dispatch": os.path.join(args.artifacts, "dispatch.json")},
        artifacts=artifacts + ["manifest.json"],
    )
    for spec in policies:
        row = summary["policies"][spec.kind]
        print(f"{spec.kind}: mean {row['mean']:.2f}  cvar({beta:.2f}) {row['cvar']:.2f}")
    return 0


def cmd_sweep_mu(args):
    case, prices, scenarios = _load_inputs(args)
    mus = [float(v) for v in args.mu_values.split(",")]
    if not mus:
        raise ValueError("at least one risk weight is required")
    config = _config(args, mode=MODE_CENTRAL)
    outdir = _outdir(args)

    rows = sweep_mu(case, prices, scenarios, mus, config)
    write_sweep_csv(os.path.join(outdir, "sweep.csv"), rows)
    artifacts = ["sweep.csv"]
    if not args.no_figures:
        from . import plots

        artifacts.append(plots.plot_mu_sweep(outdir, rows))
    write_manifest(
        outdir,
        command="sweep-mu",
        parameters={"beta": args.beta, "mu_values": mus, "mode": MODE_CENTRAL},
        inputs={"case": args.case, "prices": args.prices, "scenarios": args.scenarios},
        artifacts=artifacts + ["manifest.json"],
    )
    for row in rows:
        print(f"mu {row.mu:g}: objective {row.objective:.4f}")
    return 0


def cmd_make_bundle(args):
    outdir = _outdir(args)
    case, prices, scenarios = build_bundle(
        users_per_aggregator=args.users,
        case_seed=args.case_seed,
        n_scenarios=args.samples,
        scenario_seed=args.seed,
    )
    save_case(case, os.path.join(outdir, "case.json"))
    save_prices(prices, os.path.join(outdir, "prices.json"))
    save_scenarios(scenarios, os.path.join(outdir, "scenarios.json"))
    write_manifest(
        outdir,
        command="make-bundle",
        parameters={"users": args.users, "case_seed": args.case_seed,
                    "samples": args.samples, "seed": args.seed},
        inputs={},
        artifacts=["case.json", "prices.json", "scenarios.json", "manifest.json"],
    )
    print(f"bundle -> {outdir}")
    return 0


# ---------------------------------------------------------------- parser


def _add_solver_flags(sub, include_mode=True):
    sub.add_argument("--beta", type=float, default=0.95, help="tail probability level")
    sub.add_argument("--mu", type=float, default=1.0, help="risk weight")
    sub.add_argument("--rho", type=float, default=35.0, help="split-solve penalty")
    sub.add_argument("--eps-primal", type=float, default=1e-4,
                     help="split-solve convergence tolerance [MW]")
    sub.add_argument("--max-iter", type=int, default=200, help="split-solve iteration cap")
    sub.add_argument("--threads", type=int, default=1,
                     help="aggregator subproblem workers (does not change results)")
    if include_mode:
        sub.add_argument("--mode", choices=(MODE_CENTRAL, MODE_ADMM), default=MODE_CENTRAL)


def _add_io_flags(sub):
    sub.add_argument("case", help="case JSON file")
    sub.add_argument("prices", help="wind price schedule JSON file")
    sub.add_argument("scenarios", help="wind scenario JSON file")
    sub.add_argument("--out", default=None,
                     help="artifact directory (default $WINDCLEAR_OUT or ./out)")
    sub.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="windclear",
        description="Stochastic day-ahead clearing for networks with wind and flexible demand.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    v = subs.add_parser("validate", help="check input files")
    v.add_argument("case")
    v.add_argument("prices", nargs="?", default=None,
                   help="also check the price schedule")
    v.add_argument("scenarios", nargs="?", default=None,
                   help="also check scenario dimensions")
    v.set_defaults(func=cmd_validate)

    c = subs.add_parser("clear", help="solve the day-ahead market")
    _add_io_flags(c)
    _add_solver_flags(c)
    c.set_defaults(func=cmd_clear)

    e = subs.add_parser("evaluate", help="re-price a dispatch on fresh scenarios")
    e.add_argument("artifacts", help="artifact directory from a clear run")
    e.add_argument("--samples", type=int, default=500, help="evaluation scenario count")
    e.add_argument("--seed", type=int, default=123, help="evaluation scenario seed")
    e.add_argument("--policies", default=",".join(ALL_POLICIES),
                   help="comma-separated policy names")
    e.add_argument("--case", default=None, help="override the recorded case path")
    e.add_argument("--prices", default=None, help="override the recorded prices path")
    e.add_argument("--scenarios", default=None, help="override the recorded scenarios path")
    e.add_argument("--out", default=None)
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    s = subs.add_parser("sweep-mu", help="re-solve across risk weights")
    _add_io_flags(s)
    _add_solver_flags(s, include_mode=False)
    s.add_argument("--mu-values", default="0.5,1,2,4,8",
                   help="comma-separated risk weights")
    s.set_defaults(func=cmd_sweep_mu)

    b = subs.add_parser("make-bundle", help="write the six-bus study inputs")
    b.add_argument("--out", default=None)
    b.add_argument("--users", type=int, default=8, help="users per aggregator")
    b.add_argument("--case-seed", type=int, default=11)
    b.add_argument("--samples", type=int, default=200, help="day-ahead scenario count")
    b.add_argument("--seed", type=int, default=1, help="day-ahead scenario seed")
    b.set_defaults(func=cmd_make_bundle)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConvexityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SchemaError, DigestMismatchError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
