"""Wind scenario sets: truncated-Gaussian sampling around a forecast."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ScenarioSet:
    """A forecast plus sampled realizations of wind output.

    ``samples`` has shape [N_s, T, N_wind] and is elementwise
    nonnegative; ``sigma`` and ``seed`` record how the set was drawn
    so a run can be reproduced from its manifest.
    """

    forecast: np.ndarray          # [T, N_wind] MW
    samples: np.ndarray           # [N_s, T, N_wind] MW
    seed: int | None = None
    sigma: np.ndarray | float | None = None

    def __post_init__(self):
        self.forecast = np.atleast_2d(np.asarray(self.forecast, dtype=float))
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 3:
            raise ValueError(f"samples must be [N_s, T, N_wind], got {self.samples.shape}")
        if self.samples.shape[1:] != self.forecast.shape:
            raise ValueError(
                f"samples {self.samples.shape} do not match forecast {self.forecast.shape}"
            )
        if self.samples.shape[0] < 1:
            raise ValueError("a scenario set needs at least one sample")
        if np.any(self.samples < 0) or np.any(self.forecast < 0):
            raise ValueError("wind power cannot be negative")

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def horizon(self):
        return self.forecast.shape[0]

    @property
    def n_wind(self):
        return self.forecast.shape[1]


def default_sigma(forecast, fraction=0.2, floor=0.5):
    """Per-slot forecast-error scale: a fraction of the forecast with a floor.

    The floor keeps low-output slots from collapsing to a deterministic
    zero, which would understate the short/long exposure there.
    """
    forecast = np.atleast_2d(np.asarray(forecast, dtype=float))
    return np.maximum(fraction * forecast, floor)


def generate_scenarios(forecast, sigma, n_samples, seed):
    """Draw a scenario set around ``forecast``.

    Samples are Gaussian with the given per-entry scale, truncated at
    zero (negative output is unphysical).  A fixed seed gives a
    byte-reproducible set: a single generator draws one [N_s, T, N_w]
    tensor in one pass.

    Parameters
    ----------
    forecast : array [T, N_wind]
    sigma : float or array broadcastable to [T, N_wind]
        Standard deviation of the forecast error, MW.
    n_samples : int
    seed : int or None

    Returns
    -------
    ScenarioSet
    """
    forecast = np.atleast_2d(np.asarray(forecast, dtype=float))
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    sigma_arr = np.asarray(sigma, dtype=float)
    if np.any(sigma_arr < 0):
        raise ValueError("sigma must be nonnegative")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n_samples, *forecast.shape))
    samples = np.maximum(forecast[None, :, :] + sigma_arr * noise, 0.0)
    return ScenarioSet(forecast=forecast, samples=samples, seed=seed, sigma=sigma)
