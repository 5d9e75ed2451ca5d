"""Figure rendering for artifact directories.

All functions draw onto a fresh figure and save straight to a file
using the Agg backend, so they work headless.  Callers get back the
basename that was written, ready to list in a manifest.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, outdir, name):
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, name), dpi=120)
    plt.close(fig)
    return name


def plot_convergence(outdir, trace, objective=None, name="convergence.png"):
    """Objective and primal residual per iteration of the split solve."""
    iters = [r.iteration for r in trace]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(iters, [r.objective for r in trace], marker="o", ms=3)
    if objective is not None:
        ax1.axhline(objective, color="0.4", ls="--", lw=1, label="centralized")
        ax1.legend(fontsize=8)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("objective [$]")
    ax2.semilogy(iters, [max(r.primal_residual, 1e-16) for r in trace], marker="o", ms=3)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("primal residual [MW]")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    return _finish(fig, outdir, name)


def plot_dispatch(outdir, solution, case, name="dispatch.png"):
    """Stacked supply against load and flexible demand over the horizon."""
    slots = np.arange(1, case.horizon + 1)
    gen = solution.p_gen.sum(axis=1)
    wind = solution.p_wind.sum(axis=1)
    base = case.base_load_matrix().sum(axis=1)
    dra = solution.p_dra.sum(axis=1)
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.bar(slots, gen, label="generation", color="#9467bd", width=0.8)
    ax.bar(slots, wind, bottom=gen, label="wind commitment", color="#2ca02c", width=0.8)
    ax.step(slots, base, where="mid", color="k", lw=1.5, label="base load")
    ax.step(slots, base + dra, where="mid", color="#d62728", lw=1.5, ls="--",
            label="base + flexible")
    ax.set_xlabel("slot")
    ax.set_ylabel("power [MW]")
    ax.legend(fontsize=8, ncol=2)
    ax.grid(alpha=0.3, axis="y")
    return _finish(fig, outdir, name)


def plot_prices(outdir, solution, name="prices.png"):
    """Locational prices per bus and aggregator prices over the horizon."""
    slots = np.arange(1, solution.lmps.shape[0] + 1)
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for b in range(solution.lmps.shape[1]):
        ax.plot(slots, solution.lmps[:, b], lw=1, alpha=0.7, label=f"bus {b + 1}")
    for j in range(solution.dra_prices.shape[1]):
        ax.plot(slots, solution.dra_prices[:, j], lw=2, ls="--", label=f"aggregator {j + 1}")
    ax.set_xlabel("slot")
    ax.set_ylabel("price [$/MWh]")
    ax.legend(fontsize=7, ncol=3)
    ax.grid(alpha=0.3)
    return _finish(fig, outdir, name)


def plot_cost_cdf(outdir, distributions, beta=None, name="cost_cdf.png"):
    """Empirical cost distribution of each evaluated policy."""
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    for dist in distributions:
        xs, ps = dist.cdf()
        ax.step(xs, ps, where="post", label=dist.policy)
        if beta is not None:
            _, cvar = dist.var_cvar(beta)
            ax.axvline(cvar, ls=":", lw=1, color=ax.lines[-1].get_color())
    ax.set_xlabel("realized cost [$]")
    ax.set_ylabel("cumulative probability")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _finish(fig, outdir, name)


def plot_mu_sweep(outdir, rows, name="mu_sweep.png"):
    """Cost components of the day-ahead optimum as risk weight varies."""
    mus = [r.mu for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    ax.plot(mus, [r.generation_cost - r.utility for r in rows], marker="o", label="social cost")
    ax.plot(mus, [r.risk_term for r in rows], marker="s", label="risk term")
    ax.plot(mus, [r.objective for r in rows], marker="^", label="objective")
    ax.set_xscale("log")
    ax.set_xlabel("risk weight")
    ax.set_ylabel("[$]")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _finish(fig, outdir, name)
