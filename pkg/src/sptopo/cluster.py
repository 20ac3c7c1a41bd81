"""Seeded k-means with k-means++ initialisation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import make_rng
from .errors import ConfigError


@dataclass
class ClusterResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    ari: Optional[float] = None
    nmi: Optional[float] = None
    loss_trace: list = field(default_factory=list)
    inertia_trace: list = field(default_factory=list)


def _sq_dist(x, c):
    return np.maximum((x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :], 0.0)


def _pick(rng, weights):
    # inverse-CDF draw so repeated points keep the same selection probabilities
    cum = np.cumsum(weights)
    if cum[-1] <= 0:
        return int(rng.integers(len(weights)))
    return int(min(np.searchsorted(cum, rng.random() * cum[-1], side="right"), len(weights) - 1))


def kmeans_pp(x, k, rng) -> np.ndarray:
    centres = [x[_pick(rng, np.ones(len(x)))]]
    closest = _sq_dist(x, centres[0][None])[:, 0]
    for _ in range(1, k):
        centres.append(x[_pick(rng, closest)])
        closest = np.minimum(closest, _sq_dist(x, centres[-1][None])[:, 0])
    return np.array(centres)


def lloyd(x, centres, max_iter=300, tol=1e-6):
    """Lloyd iterations until the relative inertia change drops below ``tol``."""
    trace = []
    prev = None
    for _ in range(max_iter):
        d = _sq_dist(x, centres)
        labels = d.argmin(axis=1)
        inertia = float(d[np.arange(len(x)), labels].sum())
        trace.append(inertia)
        if prev is not None and abs(prev - inertia) <= tol * max(prev, 1e-300):
            break
        prev = inertia
        new = centres.copy()
        for j in range(len(centres)):
            members = labels == j
            if members.any():
                new[j] = x[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point worst served by its centre
                far = int(d[np.arange(len(x)), labels].argmax())
                new[j] = x[far]
        centres = new
    d = _sq_dist(x, centres)
    labels = d.argmin(axis=1)
    inertia = float(d[np.arange(len(x)), labels].sum())
    return labels, centres, inertia, trace


def kmeans(x, k: int, restarts: int = 20, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> ClusterResult:
    x = np.asarray(x, dtype=np.float64)
    if k < 1 or k > len(x):
        raise ConfigError(f"k={k} must be in [1, n={len(x)}]")
    rng = make_rng(seed, 7)
    best = None
    for _ in range(max(1, restarts)):
        labels, centres, inertia, trace = lloyd(x, kmeans_pp(x, k, rng), max_iter, tol)
        if best is None or inertia < best.inertia:
            best = ClusterResult(labels, centres, inertia, inertia_trace=trace)
    return best
