"""Local neighbourhood subgraphs that feed the per-spot diagrams."""
from __future__ import annotations

from collections import deque

import numpy as np

from ..data import WeightedGraph
from ..errors import ConfigError

SPATIAL = "spatial"
EXPRESSION = "expression"


def _hop_ball(neighbors, seed: int, hops: int) -> np.ndarray:
    depth = {seed: 0}
    queue = deque([seed])
    while queue:
        x = queue.popleft()
        if depth[x] == hops:
            continue
        for y in neighbors[x]:
            y = int(y)
            if y not in depth:
                depth[y] = depth[x] + 1
                queue.append(y)
    return np.array(sorted(depth), dtype=np.int64)


def local_vertices(coords, spot: int, radius=None, hop_cap=None, spatial_neighbors=None) -> np.ndarray:
    """Spots within ``radius`` of the seed, or within ``hop_cap`` hops when no radius is given."""
    if radius is not None:
        if not radius > 0:
            raise ConfigError("radius must be positive")
        if np.isinf(radius):
            return np.arange(len(coords))
        d = np.sqrt(((coords - coords[spot]) ** 2).sum(axis=1))
        return np.flatnonzero(d <= radius)
    if hop_cap is None or hop_cap < 1:
        raise ConfigError("need radius > 0 or hop_cap >= 1")
    return _hop_ball(spatial_neighbors, spot, int(hop_cap))


def induced_subgraph(graph: WeightedGraph, vertices: np.ndarray, coords=None, max_length=None) -> WeightedGraph:
    """Subgraph on ``vertices`` (relabelled 0..m-1 in the given order).

    With ``max_length``, edges whose endpoints are further apart than that in
    ``coords`` are dropped.
    """
    local = np.full(graph.n, -1, dtype=np.int64)
    local[vertices] = np.arange(len(vertices))
    keep = (local[graph.u] >= 0) & (local[graph.v] >= 0)
    if max_length is not None and np.isfinite(max_length):
        length = np.sqrt(((coords[graph.u] - coords[graph.v]) ** 2).sum(axis=1))
        keep &= length <= max_length
    a, b = local[graph.u[keep]], local[graph.v[keep]]
    return WeightedGraph(len(vertices), np.minimum(a, b), np.maximum(a, b), graph.w[keep])


def local_filtration(
    spatial: WeightedGraph,
    expression: WeightedGraph,
    coords,
    spot: int,
    mode: str = SPATIAL,
    radius=None,
    hop_cap=None,
    neighborhood: str = "radius",
    spatial_neighbors=None,
) -> tuple[WeightedGraph, np.ndarray]:
    """Induced neighbourhood graph around ``spot`` and its global vertex ids.

    ``neighborhood="radius"`` takes the spots within ``radius`` of the seed;
    ``"hops"`` takes the ``hop_cap``-hop ball in the spatial graph. In
    expression mode the edges come from the expression graph and any edge
    spanning a spatial distance above ``radius`` is removed.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if neighborhood == "radius":
        vertices = local_vertices(coords, spot, radius=radius)
    elif neighborhood == "hops":
        if spatial_neighbors is None:
            spatial_neighbors = spatial.neighbor_lists()
        vertices = local_vertices(coords, spot, hop_cap=hop_cap, spatial_neighbors=spatial_neighbors)
    else:
        raise ConfigError(f"unknown neighborhood {neighborhood!r}")
    if mode == SPATIAL:
        return induced_subgraph(spatial, vertices), vertices
    if mode == EXPRESSION:
        return induced_subgraph(expression, vertices, coords, radius), vertices
    raise ConfigError(f"unknown filtration mode {mode!r}")
