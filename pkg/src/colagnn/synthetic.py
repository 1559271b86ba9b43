"""Phase-lagged seasonal benchmark.

Every location follows the same annual wave, shifted by a location-specific
lag, so locations that peak early carry information about locations that
peak late.  The wave is a sharpened sinusoid whose height changes from one
season to the next; a season starts at each location's own trough, so the
leaders reveal the coming season's height before the followers' windows
do.  Adjacency links locations whose lags are close.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import AdjacencyMatrix, EpiDataset

PERIOD = 52


@dataclass(frozen=True)
class SyntheticBenchmark:
    series: EpiDataset
    adjacency: AdjacencyMatrix
    lags: np.ndarray


def seasonal_benchmark(n_locations: int = 10, n_weeks: int = 500, seed: int = 0,
                       max_lag: float = 20.0, noise: float = 0.03, sharpness: float = 3.0,
                       amplitude_sd: float = 0.35, neighbor_lag: float | None = None) -> SyntheticBenchmark:
    """Generate weekly counts ``(N, T)`` and a lag-proximity adjacency.

    ``noise`` is the standard deviation of multiplicative Gaussian noise
    relative to each location's scale; ``amplitude_sd`` is the log-normal
    spread of season heights.  Locations within ``neighbor_lag`` weeks
    (default ``max_lag / 3``) of each other are adjacent.
    """
    rng = np.random.default_rng(seed)
    N, T = n_locations, n_weeks
    lags = np.sort(rng.uniform(0.0, max_lag, size=N))
    lags[0] = 0.0
    scale = rng.uniform(500.0, 3000.0, size=N)
    base = rng.uniform(0.05, 0.15, size=N)
    n_seasons = T // PERIOD + 3
    heights = np.exp(amplitude_sd * rng.standard_normal(n_seasons))

    t = np.arange(T)[None, :] - lags[:, None]          # location-local time
    phase = 2.0 * np.pi * t / PERIOD
    wave = ((1.0 - np.cos(phase)) / 2.0) ** sharpness  # 0 at trough, 1 at peak
    season = np.floor(t / PERIOD).astype(int) + 1
    signal = base[:, None] + heights[season] * wave
    values = scale[:, None] * signal * (1.0 + noise * rng.standard_normal((N, T)))
    values = np.round(np.maximum(values, 0.0))

    locations = tuple(f"L{i:02d}" for i in range(N))
    weeks = tuple(f"w{k:04d}" for k in range(T))
    radius = max_lag / 3.0 if neighbor_lag is None else neighbor_lag
    adj = (np.abs(lags[:, None] - lags[None, :]) <= radius).astype(float)
    return SyntheticBenchmark(EpiDataset(locations, values, weeks), AdjacencyMatrix(locations, adj), lags)
