"""Partition agreement: adjusted Rand index and normalized mutual information."""
from __future__ import annotations

import numpy as np

from .errors import MetricError


def contingency(labels_a, labels_b) -> np.ndarray:
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError(f"label arrays differ in length: {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise MetricError("need at least 2 labels")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _same_partition(table: np.ndarray) -> bool:
    return bool(np.all((table > 0).sum(axis=0) == 1) and np.all((table > 0).sum(axis=1) == 1))


def _pairs(x) -> int:
    return int((np.asarray(x, dtype=np.int64) * (np.asarray(x, dtype=np.int64) - 1) // 2).sum())


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index; 1.0/0.0 for identical/different partitions when it is undefined."""
    table = contingency(labels_a, labels_b)
    if _same_partition(table):
        return 1.0
    n = int(table.sum())
    index = _pairs(table)
    sum_a = _pairs(table.sum(axis=1))
    sum_b = _pairs(table.sum(axis=0))
    expected = sum_a * sum_b / (n * (n - 1) // 2)
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        return 0.0
    return float((index - expected) / (maximum - expected))


def entropy(counts) -> float:
    p = np.asarray(counts, dtype=np.float64)
    p = p[p > 0] / p.sum()
    return float(-(p * np.log(p)).sum())


def nmi(labels_a, labels_b) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(labels_a, labels_b)
    if _same_partition(table):
        return 1.0
    h_a = entropy(table.sum(axis=1))
    h_b = entropy(table.sum(axis=0))
    if h_a == 0 or h_b == 0:
        return 0.0
    n = table.sum()
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    mi = float((pij * np.log(pij / outer)).sum())
    return max(0.0, mi / ((h_a + h_b) / 2))
