"""Extended persistence of edge-weighted graphs.

Vertices enter the ascending pass at their smallest incident edge weight and
the descending pass at their largest (isolated vertices: 0). Triangles, when
enabled, enter at the largest of their edge weights going up and the smallest
going down, which is the Vietoris-Rips rule restricted to graph cliques.

Dimension 0 is handled by union-find. Dimension 1 needs the descending pass,
so when the graph has cycles the 2-simplex columns of the extended filtration
are reduced with sparse Z/2 columns (python sets).
"""
from __future__ import annotations

import numpy as np

from .diagram import EXTENDED, ORDINARY, ExtendedPersistenceDiagram


def vertex_values(graph) -> tuple[np.ndarray, np.ndarray]:
    """Ascending (min incident weight) and descending (max incident weight) vertex values."""
    lo = np.full(graph.n, np.inf)
    hi = np.full(graph.n, -np.inf)
    np.minimum.at(lo, graph.u, graph.w)
    np.minimum.at(lo, graph.v, graph.w)
    np.maximum.at(hi, graph.u, graph.w)
    np.maximum.at(hi, graph.v, graph.w)
    lo[~np.isfinite(lo)] = 0.0
    hi[~np.isfinite(hi)] = 0.0
    return lo, hi


def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def _dimension_zero(graph, asc, desc, edge_order):
    parent = list(range(graph.n))
    points = []
    n_cycles = 0
    for e in edge_order:
        a, b = int(graph.u[e]), int(graph.v[e])
        ra, rb = _find(parent, a), _find(parent, b)
        if ra == rb:
            n_cycles += 1
            continue
        # elder rule: the root entering later in the ascending order dies
        if (asc[ra], ra) < (asc[rb], rb):
            old, young = ra, rb
        else:
            old, young = rb, ra
        points.append((float(asc[young]), float(graph.w[e]), 0, ORDINARY))
        parent[young] = old
    top = {}
    for v in range(graph.n):
        r = _find(parent, v)
        top[r] = max(top.get(r, -np.inf), desc[v])
    for r, d in top.items():
        points.append((float(asc[r]), float(d), 0, EXTENDED))
    return points, n_cycles


def _triangles(graph, edge_id):
    nbrs = [set() for _ in range(graph.n)]
    for a, b in zip(graph.u, graph.v):
        nbrs[int(a)].add(int(b))
        nbrs[int(b)].add(int(a))
    tris = []
    for a, b in zip(graph.u, graph.v):
        a, b = int(a), int(b)
        for c in nbrs[a] & nbrs[b]:
            if c > b:
                tris.append((edge_id[(a, b)], edge_id[(a, c)], edge_id[(b, c)]))
    return tris


def _dimension_one(graph, asc_v, desc_v, edge_order, triangles: bool):
    m = graph.n_edges
    w = graph.w
    # row indices: K edges in ascending order, then cone edges over vertices
    edge_row = np.empty(m, dtype=np.int64)
    edge_row[edge_order] = np.arange(m)
    cone_vertex_order = sorted(range(graph.n), key=lambda v: (-desc_v[v], v))
    cone_row = np.empty(graph.n, dtype=np.int64)
    cone_row[cone_vertex_order] = m + np.arange(graph.n)
    row_edge = {int(edge_row[e]): e for e in range(m)}

    columns = []  # (boundary rows, death value, class)
    if triangles:
        edge_id = {(int(a), int(b)): e for e, (a, b) in enumerate(zip(graph.u, graph.v))}
        tris = _triangles(graph, edge_id)
        keyed = []
        for sides in tris:
            verts = tuple(sorted({int(graph.u[s]) for s in sides} | {int(graph.v[s]) for s in sides}))
            keyed.append(((max(w[s] for s in sides), verts), sides))
        keyed.sort(key=lambda item: item[0])
        for (value, _), sides in keyed:
            columns.append(({int(edge_row[s]) for s in sides}, float(value), ORDINARY))
    cone_edges = sorted(range(m), key=lambda e: (-w[e], int(graph.u[e]), int(graph.v[e])))
    for e in cone_edges:
        rows = {int(edge_row[e]), int(cone_row[graph.u[e]]), int(cone_row[graph.v[e]])}
        columns.append((rows, float(w[e]), EXTENDED))

    owner: dict[int, set] = {}
    points = []
    for rows, death, cls in columns:
        col = set(rows)
        while col:
            low = max(col)
            reduced = owner.get(low)
            if reduced is None:
                owner[low] = col
                if low < m:
                    points.append((float(w[row_edge[low]]), death, 1, cls))
                break
            col ^= reduced
    return points


def extended_persistence(graph, triangles: bool = True) -> ExtendedPersistenceDiagram:
    """Ordinary and extended points in dimensions 0 and 1.

    Descending-pass (relative) pairs are not reported; every independent cycle
    yields exactly one dimension-1 point.
    """
    if graph.n == 0:
        return ExtendedPersistenceDiagram()
    asc, desc = vertex_values(graph)
    edge_order = np.lexsort((graph.v, graph.u, graph.w))
    points, n_cycles = _dimension_zero(graph, asc, desc, edge_order)
    if n_cycles:
        points.extend(_dimension_one(graph, asc, desc, edge_order, triangles))
    return ExtendedPersistenceDiagram(points)
