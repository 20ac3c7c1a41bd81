"""Per-spot extended persistence images for the spatial and expression graphs."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, TopologyError
from .diagram import ExtendedPersistenceDiagram
from .filtration import EXPRESSION, SPATIAL, induced_subgraph, local_filtration
from .image import DEFAULT_BOUNDS, image_metadata, image_pixels
from .persistence import extended_persistence


@dataclass
class TopoConfig:
    radius: Optional[float] = None  # None -> radius_factor * median nearest-neighbour distance
    radius_factor: float = 2.0
    hop_cap: int = 2
    neighborhood: str = "radius"  # or "hops"
    local: bool = True  # False broadcasts one whole-slice diagram to every spot
    triangles: bool = True
    resolution: int = 20
    sigma_x: float = 0.05
    sigma_y: float = 0.05
    power: float = 1.0
    bounds: tuple = DEFAULT_BOUNDS
    parallel: bool = False
    workers: Optional[int] = None

    def validate(self) -> "TopoConfig":
        if self.radius is not None and not self.radius > 0:
            raise ConfigError("topo.radius must be positive")
        if not self.radius_factor > 0:
            raise ConfigError("topo.radius_factor must be positive")
        if self.neighborhood not in ("radius", "hops"):
            raise ConfigError(f"topo.neighborhood must be 'radius' or 'hops', got {self.neighborhood!r}")
        if self.neighborhood == "hops" and int(self.hop_cap) < 1:
            raise ConfigError("topo.hop_cap must be >= 1")
        if int(self.resolution) < 1:
            raise ConfigError("topo.resolution must be >= 1")
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ConfigError("topo.sigma_x and topo.sigma_y must be positive")
        if len(self.bounds) != 4 or not (self.bounds[1] > self.bounds[0] and self.bounds[3] > self.bounds[2]):
            raise ConfigError(f"topo.bounds must be (b_min, b_max, d_min, d_max) with min < max, got {self.bounds}")
        return self

    def image_meta(self) -> dict:
        return image_metadata(self.resolution, self.bounds, self.sigma_x, self.sigma_y, self.power)


@dataclass
class EPIResult:
    spatial: np.ndarray  # (n_spots, P, P)
    expression: np.ndarray
    spatial_diagrams: list[ExtendedPersistenceDiagram] = field(repr=False)
    expression_diagrams: list[ExtendedPersistenceDiagram] = field(repr=False)
    radius: float = float("nan")


def _diagrams_for(args):
    spatial, expression, coords, spots, radius, cfg = args
    out = []
    neighbors = spatial.neighbor_lists() if cfg.neighborhood == "hops" else None
    for spot in spots:
        pair = []
        for mode in (SPATIAL, EXPRESSION):
            try:
                g, _ = local_filtration(
                    spatial, expression, coords, int(spot), mode, radius, cfg.hop_cap, cfg.neighborhood, neighbors
                )
                pair.append(extended_persistence(g, cfg.triangles))
            except Exception as exc:  # annotate with the failing spot
                raise TopologyError(f"spot {int(spot)} ({mode}): {exc}") from exc
        out.append(tuple(pair))
    return out


def spot_diagrams(spatial, expression, coords, cfg: TopoConfig, radius: float):
    n = spatial.n
    if not cfg.local:
        whole_s = extended_persistence(spatial, cfg.triangles)
        whole_x = extended_persistence(induced_subgraph(expression, np.arange(n), coords, radius), cfg.triangles)
        return [whole_s] * n, [whole_x] * n
    spots = np.arange(n)
    if cfg.parallel and n > 1:
        chunks = [c for c in np.array_split(spots, min(n, 4 * (cfg.workers or 4))) if len(c)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_diagrams_for, [(spatial, expression, coords, c, radius, cfg) for c in chunks]))
        results = [d for part in parts for d in part]
    else:
        results = _diagrams_for((spatial, expression, coords, spots, radius, cfg))
    return [r[0] for r in results], [r[1] for r in results]


def normalize_diagrams(diagrams: list[ExtendedPersistenceDiagram]) -> list[np.ndarray]:
    """Min-max scale all births and deaths of one modality jointly to [0, 1]."""
    pairs = [d.pairs() for d in diagrams]
    values = np.concatenate([p.ravel() for p in pairs]) if pairs else np.zeros(0)
    if values.size == 0:
        return pairs
    lo, hi = values.min(), values.max()
    scale = hi - lo if hi > lo else 1.0
    return [(p - lo) / scale for p in pairs]


def images_from_pairs(pairs: list[np.ndarray], cfg: TopoConfig) -> np.ndarray:
    stack = np.zeros((len(pairs), cfg.resolution, cfg.resolution))
    for i, p in enumerate(pairs):
        stack[i] = image_pixels(p, cfg.resolution, cfg.sigma_x, cfg.sigma_y, cfg.power, cfg.bounds)
    return stack


def resolve_radius(coords, cfg: TopoConfig) -> float:
    from ..data import median_nn_distance

    if cfg.radius is not None:
        return float(cfg.radius)
    return float(cfg.radius_factor * median_nn_distance(coords))


def epi_for_all_spots(spatial, expression, coords, cfg: TopoConfig | None = None) -> EPIResult:
    """Diagrams and persistence images for every spot, one stack per modality."""
    cfg = (cfg or TopoConfig()).validate()
    coords = np.asarray(coords, dtype=np.float64)
    radius = resolve_radius(coords, cfg)
    diag_s, diag_x = spot_diagrams(spatial, expression, coords, cfg, radius)
    stack_s = images_from_pairs(normalize_diagrams(diag_s), cfg)
    stack_x = images_from_pairs(normalize_diagrams(diag_x), cfg)
    return EPIResult(stack_s, stack_x, diag_s, diag_x, radius)
