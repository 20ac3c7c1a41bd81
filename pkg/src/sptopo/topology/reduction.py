"""Reference extended persistence by dense boundary-matrix reduction over Z/2.

The extended filtration is the cone construction: a cone vertex first, the
ascending (sublevel) complex next, then the cone over the descending
(superlevel) complex. This is deliberately the slow textbook algorithm and
serves as the oracle for :func:`sptopo.topology.extended_persistence`.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

from ..errors import OracleError
from .diagram import EXTENDED, ORDINARY, ExtendedPersistenceDiagram

MAX_VERTICES = 12


def _complex(graph, triangles: bool):
    n = graph.n
    weight = {(int(a), int(b)): float(c) for a, b, c in zip(graph.u, graph.v, graph.w)}
    incident = [[] for _ in range(n)]
    for (a, b), c in weight.items():
        incident[a].append(c)
        incident[b].append(c)
    simplices = {}  # vertex tuple -> (ascending value, descending value)
    for v in range(n):
        simplices[(v,)] = (min(incident[v], default=0.0), max(incident[v], default=0.0))
    for e, c in weight.items():
        simplices[e] = (c, c)
    if triangles:
        for tri in combinations(range(n), 3):
            sides = [weight.get(pair) for pair in combinations(tri, 2)]
            if all(s is not None for s in sides):
                simplices[tri] = (max(sides), min(sides))
    return simplices


def brute_force_reduction(graph, triangles: bool = True) -> ExtendedPersistenceDiagram:
    if graph.n > MAX_VERTICES:
        raise OracleError(f"oracle limited to {MAX_VERTICES} vertices, got {graph.n}")
    if graph.n == 0:
        return ExtendedPersistenceDiagram()
    simplices = _complex(graph, triangles)
    ascending = sorted(simplices, key=lambda s: (simplices[s][0], len(s), s))
    descending = sorted(simplices, key=lambda s: (-simplices[s][1], len(s), s))
    # filtration entries: ("cone",), ("K", s), ("C", s) for the cone over s
    order = [("cone", ())] + [("K", s) for s in ascending] + [("C", s) for s in descending]
    index = {entry: i for i, entry in enumerate(order)}
    size = len(order)

    matrix = np.zeros((size, size), dtype=bool)
    for j, (kind, s) in enumerate(order):
        if kind == "K":
            if len(s) > 1:
                for face in combinations(s, len(s) - 1):
                    matrix[index[("K", face)], j] = True
        elif kind == "C":
            matrix[index[("K", s)], j] = True
            if len(s) == 1:
                matrix[index[("cone", ())], j] = True
            else:
                for face in combinations(s, len(s) - 1):
                    matrix[index[("C", face)], j] = True

    pivot_owner: dict[int, int] = {}
    pairs = []
    for j in range(size):
        col = matrix[:, j]
        while col.any():
            low = int(np.flatnonzero(col)[-1])
            other = pivot_owner.get(low)
            if other is None:
                pivot_owner[low] = j
                pairs.append((low, j))
                break
            col ^= matrix[:, other]

    points = []
    for i, j in pairs:
        birth_kind, birth_s = order[i]
        death_kind, death_s = order[j]
        dim = len(birth_s) - 1
        if birth_kind != "K" or dim > 1:
            continue
        b = simplices[birth_s][0]
        if death_kind == "K":
            points.append((b, simplices[death_s][0], dim, ORDINARY))
        else:
            points.append((b, simplices[death_s][1], dim, EXTENDED))
    return ExtendedPersistenceDiagram(points)
