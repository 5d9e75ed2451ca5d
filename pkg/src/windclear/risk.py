"""Transaction-cost and CVaR mathematics.

The two-settlement transaction cost of a wind commitment p against a
realization w, at purchase price b and sell price s per slot and farm,
is

    T(p, w) = sum_t,m  b[t,m] * max(p - w, 0) - s[t,m] * max(w - p, 0),

a deviation purchase when short and a sell-back credit when long.
With the half-spread  varpi = (b - s) / 2  and midpoint
vartheta = (b + s) / 2  this is identically

    T(p, w) = sum_t,m  varpi * |p - w| + vartheta * (p - w),

which is convex in p exactly when s <= b elementwise.  Everything in
this module is expressed through those two forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PriceSchedule:
    """Per-slot, per-farm purchase and sell prices in $/MWh."""

    purchase: np.ndarray  # b, [T, N_wind]
    sell: np.ndarray      # s, [T, N_wind]

    def __post_init__(self):
        self.purchase = np.atleast_2d(np.asarray(self.purchase, dtype=float))
        self.sell = np.atleast_2d(np.asarray(self.sell, dtype=float))
        if self.purchase.shape != self.sell.shape:
            raise ValueError(
                f"price shapes differ: purchase {self.purchase.shape}, "
                f"sell {self.sell.shape}"
            )
        if np.any(self.purchase < 0) or np.any(self.sell < 0):
            raise ValueError("prices must be nonnegative")

    @property
    def horizon(self):
        return self.purchase.shape[0]

    @property
    def n_wind(self):
        return self.purchase.shape[1]

    @property
    def half_spread(self):
        """(b - s) / 2, the coefficient on |p - w|."""
        return 0.5 * (self.purchase - self.sell)

    @property
    def midpoint(self):
        """(b + s) / 2, the coefficient on (p - w)."""
        return 0.5 * (self.purchase + self.sell)

    @property
    def convexity_ok(self):
        """True when s <= b everywhere, i.e. the cost is convex in p."""
        return bool(np.all(self.sell <= self.purchase))


@dataclass
class RiskConfig:
    """CVaR level and risk weight for the clearing objective."""

    beta: float = 0.95
    mu: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.mu > 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")


def _check_pair(p_commit, w, prices):
    p_commit = np.asarray(p_commit, dtype=float)
    w = np.asarray(w, dtype=float)
    shape = (prices.horizon, prices.n_wind)
    if p_commit.shape != shape:
        raise ValueError(f"commitment shape {p_commit.shape} != price shape {shape}")
    if w.shape[-2:] != shape:
        raise ValueError(f"realization shape {w.shape} incompatible with {shape}")
    return p_commit, w


def transaction_cost(p_commit, w, prices):
    """Transaction cost in half-spread/midpoint form.

    Parameters
    ----------
    p_commit : array [T, N_wind]
        Committed wind schedule, MW.
    w : array [T, N_wind]
        Realized wind, MW.
    prices : PriceSchedule

    Returns
    -------
    float
        sum of varpi * |p - w| + vartheta * (p - w) over slots and farms.
    """
    p_commit, w = _check_pair(p_commit, w, prices)
    d = p_commit - w
    return float(np.sum(prices.half_spread * np.abs(d) + prices.midpoint * d))


def transaction_cost_hinge(p_commit, w, prices):
    """Transaction cost in purchase/sell hinge form.

    Computes sum of b * [p - w]^+ - s * [w - p]^+ directly; equal to
    :func:`transaction_cost` for every input, which the test suite
    exercises as an identity.
    """
    p_commit, w = _check_pair(p_commit, w, prices)
    d = p_commit - w
    short = np.maximum(d, 0.0)
    long = np.maximum(-d, 0.0)
    return float(np.sum(prices.purchase * short - prices.sell * long))


def transaction_cost_batch(p_commit, samples, prices):
    """Vectorized hinge-form cost of one commitment against many draws.

    Parameters
    ----------
    p_commit : array [T, N_wind]
    samples : array [N, T, N_wind]
    prices : PriceSchedule

    Returns
    -------
    array [N]
    """
    p_commit, samples = _check_pair(p_commit, samples, prices)
    d = p_commit[None, :, :] - samples
    short = np.maximum(d, 0.0)
    long = np.maximum(-d, 0.0)
    return np.einsum("tm,ntm->n", prices.purchase, short) - np.einsum(
        "tm,ntm->n", prices.sell, long
    )


def check_convexity_condition(prices):
    """True when the schedule admits a convex clearing problem."""
    return prices.convexity_ok


def empirical_var_cvar(samples, beta):
    """Empirical value-at-risk and conditional value-at-risk.

    VaR is the smallest sample at which the empirical CDF reaches
    ``beta``; CVaR is the minimum over eta of
    eta + mean([x - eta]^+) / (1 - beta), attained at a sample point,
    so the search runs over the sorted samples in O(n).

    Parameters
    ----------
    samples : array-like
        Cost draws; at least one.
    beta : float
        Confidence level in (0, 1).

    Returns
    -------
    (float, float)
        (VaR_beta, CVaR_beta), with CVaR >= VaR always.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("empirical_var_cvar needs at least one sample")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    k = max(int(np.ceil(beta * n)), 1)
    var = x[k - 1]

    # f(eta) = eta + sum([x - eta]^+) / (n (1 - beta)) is piecewise
    # linear with breakpoints at the samples; evaluate it there.
    tail = np.concatenate([np.cumsum(x[::-1])[::-1][1:], [0.0]])  # sum of x[j], j > i
    counts = n - 1 - np.arange(n)
    vals = x + (tail - counts * x) / (n * (1.0 - beta))
    cvar = float(np.min(vals))
    return float(var), cvar


def saa_cvar_value(p_commit, eta, scenarios, prices, beta):
    """Sample-average CVaR objective term for a fixed commitment.

    Evaluates eta + sum_s [T(p, w_s) - eta]^+ / (N_s (1 - beta)), the
    quantity the clearing objective minimizes jointly over p and eta.

    Parameters
    ----------
    p_commit : array [T, N_wind]
    eta : float
        Value-at-risk estimate.
    scenarios : ScenarioSet
    prices : PriceSchedule
    beta : float

    Returns
    -------
    float
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    costs = transaction_cost_batch(p_commit, scenarios.samples, prices)
    n = costs.size
    return float(eta + np.sum(np.maximum(costs - eta, 0.0)) / (n * (1.0 - beta)))
