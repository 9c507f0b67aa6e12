"""Reference divergences on small discrete and empirical distributions.

These are exact oracles used by tests and by the toy Wasserstein critic
checks; nothing here is fitted or approximate beyond float arithmetic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiscreteDist:
    """Probability vector over a shared finite support."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError(f"probs must be a non-empty 1-D vector, got shape {probs.shape}")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, expected 1 within 1e-9")
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return int(self.probs.size)


@dataclass(frozen=True)
class EmpiricalSample:
    """1-D sample treated as a uniform empirical measure."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("sample must be non-empty and 1-D")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)


def _as_dist(p) -> DiscreteDist:
    return p if isinstance(p, DiscreteDist) else DiscreteDist(np.asarray(p, dtype=np.float64))


def _as_sample(x) -> EmpiricalSample:
    return x if isinstance(x, EmpiricalSample) else EmpiricalSample(np.asarray(x, dtype=np.float64))


def kl(p, q, base: float | None = None) -> float:
    """Kullback-Leibler divergence sum(p * log(p/q)), in nats by default.

    Where p has mass and q has none the divergence is infinite; that case
    returns math.inf and emits a warning rather than raising, since it is
    a legitimate value of the functional.
    """
    pd, qd = _as_dist(p), _as_dist(q)
    if len(pd) != len(qd):
        raise ValueError(f"distributions have different support sizes: {len(pd)} vs {len(qd)}")
    mask = pd.probs > 0
    if np.any(qd.probs[mask] == 0):
        warnings.warn("absolute continuity violated (p > 0 where q == 0); KL is infinite")
        return math.inf
    value = float(np.sum(pd.probs[mask] * np.log(pd.probs[mask] / qd.probs[mask])))
    if base is not None:
        value /= math.log(base)
    # Clamp the tiny negative float noise that exact-equality inputs produce.
    return max(value, 0.0)


def js(p, q, base: float = 2.0) -> float:
    """Jensen-Shannon divergence via the mixture m = (p+q)/2.

    In base 2 the value lies in [0, 1] and is symmetric; other bases
    rescale it.
    """
    pd, qd = _as_dist(p), _as_dist(q)
    if len(pd) != len(qd):
        raise ValueError(f"distributions have different support sizes: {len(pd)} vs {len(qd)}")
    m = DiscreteDist((pd.probs + qd.probs) / 2.0)
    return 0.5 * kl(pd, m, base=base) + 0.5 * kl(qd, m, base=base)


def wasserstein1_empirical(xs, ys) -> float:
    """Wasserstein-1 distance between two 1-D empirical measures.

    Equal sizes reduce to the mean absolute difference of sorted samples;
    unequal sizes integrate the area between the two empirical CDFs. Both
    are exact for empirical measures, no optimization involved.
    """
    a, b = _as_sample(xs), _as_sample(ys)
    if len(a) == len(b):
        return float(np.mean(np.abs(np.sort(a.values) - np.sort(b.values))))

    xa, xb = np.sort(a.values), np.sort(b.values)
    grid = np.concatenate([xa, xb])
    grid.sort(kind="mergesort")
    deltas = np.diff(grid)
    # CDF value of each empirical measure on every inter-point interval.
    cdf_a = np.searchsorted(xa, grid[:-1], side="right") / len(a)
    cdf_b = np.searchsorted(xb, grid[:-1], side="right") / len(b)
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))
