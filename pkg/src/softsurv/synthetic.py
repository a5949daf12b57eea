"""Synthetic survival data with a known tree structure."""
from __future__ import annotations

import numpy as np

from .data import SurvivalDataset


def _censor(rng, T, frac):
    """Censor a random ``frac`` of points at a uniform fraction of their event time."""
    censored = rng.random(T.size) < frac
    t = np.where(censored, T * rng.uniform(0.05, 1.0, T.size), T)
    return t, (~censored).astype(int)


def two_population_exp(n: int = 400, rates=(1.0, 5.0), censor_frac: float = 0.2, n_noise: int = 1,
                       seed: int = 0) -> SurvivalDataset:
    """Exponential lifetimes whose rate is ``rates[0]`` when ``x0 < 0.5`` and
    ``rates[1]`` otherwise; the other features are pure noise.  Also returns
    the true rates via :func:`true_rates`."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, 1 + n_noise))
    rate = np.where(X[:, 0] < 0.5, rates[0], rates[1])
    T = rng.exponential(1.0 / rate)
    t, c = _censor(rng, T, censor_frac)
    return SurvivalDataset(X, t, c, tuple(f"x{j}" for j in range(X.shape[1])))


def true_rates(ds: SurvivalDataset, rates=(1.0, 5.0)) -> np.ndarray:
    return np.where(ds.features[:, 0] < 0.5, rates[0], rates[1])


def two_group_weibull(n: int = 400, scale_ratio: float = 2.0, shape: float = 1.5, censor_frac: float = 0.2,
                      seed: int = 0) -> SurvivalDataset:
    """Weibull lifetimes whose scale is multiplied by ``scale_ratio`` in group 1.

    The group is a 0/1 column also exposed as a (weakly informative) feature
    correlate ``x0``, so a tree can split on it; ``x1``, ``x2`` shift the
    scale for everyone.
    """
    rng = np.random.default_rng(seed)
    group = (rng.random(n) < 0.5).astype(int)
    x0 = np.clip(group + rng.normal(0.0, 0.3, n), -1.0, 2.0)
    x12 = rng.uniform(0.0, 1.0, size=(n, 2))
    X = np.column_stack([x0, x12])
    scale = np.exp(0.5 * x12[:, 0] - 0.5 * x12[:, 1]) * np.where(group == 1, scale_ratio, 1.0)
    T = scale * rng.weibull(shape, n)
    t, c = _censor(rng, T, censor_frac)
    return SurvivalDataset(X, t, c, ("x0", "x1", "x2"), group=group)
