"""Spatial slices, preprocessing, graph construction and synthetic data."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, GraphError, IngestionError, ParseError, PreprocessingError


@dataclass
class SpatialSlice:
    """One tissue section: raw counts, coordinates and optional labels.

    ``true_means`` is only populated by :func:`synth_slice`.
    """

    counts: np.ndarray
    coords: np.ndarray
    gene_names: list[str]
    spot_ids: list[str]
    labels: Optional[np.ndarray] = None
    label_names: Optional[list[str]] = None
    true_means: Optional[np.ndarray] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        self.coords = np.asarray(self.coords, dtype=np.float64)
        n, g = self.counts.shape
        if len(self.spot_ids) != n or len(self.gene_names) != g:
            raise IngestionError(
                f"counts shape {self.counts.shape} does not match {len(self.spot_ids)} spot ids / {len(self.gene_names)} genes"
            )
        if self.coords.shape != (n, 2) or not np.all(np.isfinite(self.coords)):
            raise IngestionError(f"coords must be finite with shape ({n}, 2), got {self.coords.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise IngestionError(f"labels length {self.labels.shape} does not match {n} spots")

    @property
    def n_spots(self) -> int:
        return self.counts.shape[0]

    @property
    def n_genes(self) -> int:
        return self.counts.shape[1]


@dataclass
class WeightedGraph:
    """Simple undirected graph stored as parallel edge arrays with ``u < v``."""

    n: int
    u: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    w: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float64))

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int64).reshape(-1)
        self.v = np.asarray(self.v, dtype=np.int64).reshape(-1)
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if not (len(self.u) == len(self.v) == len(self.w)):
            raise GraphError("edge arrays differ in length")
        if len(self.u):
            if np.any(self.u >= self.v) or self.u.min() < 0 or self.v.max() >= self.n:
                raise GraphError("edges must satisfy 0 <= u < v < n")
            if not np.all(np.isfinite(self.w)) or np.any(self.w < 0):
                raise GraphError("edge weights must be finite and non-negative")
            keys = self.u * self.n + self.v
            if len(np.unique(keys)) != len(keys):
                raise GraphError("duplicate edges")

    @classmethod
    def from_edges(cls, n: int, edges) -> "WeightedGraph":
        edges = list(edges)
        if not edges:
            return cls(n)
        u, v, w = zip(*edges)
        return cls(n, np.array(u), np.array(v), np.array(w, dtype=np.float64))

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.u, self.v, self.w)]

    @property
    def n_edges(self) -> int:
        return len(self.u)

    def adjacency(self) -> sp.csr_matrix:
        """Binary symmetric adjacency without self-loops."""
        data = np.ones(2 * self.n_edges)
        rows = np.concatenate([self.u, self.v])
        cols = np.concatenate([self.v, self.u])
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def neighbor_lists(self) -> list[np.ndarray]:
        adj = self.adjacency()
        return [adj.indices[adj.indptr[i] : adj.indptr[i + 1]].copy() for i in range(self.n)]

    def n_components(self) -> int:
        return int(connected_components(self.adjacency(), directed=False)[0]) if self.n else 0


@dataclass
class PreprocessConfig:
    n_hvg: int = 3000
    target_sum: Optional[float] = None  # None -> median library size
    log_transform: bool = True
    k_spatial: int = 6
    k_expression: int = 15
    n_pcs: int = 50

    def validate(self) -> "PreprocessConfig":
        for name in ("n_hvg", "k_spatial", "k_expression", "n_pcs"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"preprocess.{name} must be >= 1")
        if self.target_sum is not None and not self.target_sum > 0:
            raise ConfigError("preprocess.target_sum must be positive")
        return self


class Preprocessed(NamedTuple):
    normalized: np.ndarray
    raw: np.ndarray
    size_factors: np.ndarray
    genes: np.ndarray  # column indices of the selected genes, ascending


# file ingestion

def _read_tsv(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh, delimiter="\t") if row]


def load_slice(counts_path, coords_path, labels_path=None) -> SpatialSlice:
    """Read counts / coords / labels TSVs; spot order follows the coords file."""
    counts_rows = _read_tsv(counts_path)
    if not counts_rows:
        raise ParseError(f"{counts_path}: empty counts file")
    genes = counts_rows[0][1:]
    by_spot: dict[str, int] = {}
    values = []
    for lineno, row in enumerate(counts_rows[1:], start=2):
        if len(row) != len(genes) + 1:
            raise ParseError(f"{counts_path}:{lineno}: expected {len(genes) + 1} fields, got {len(row)}")
        cells = []
        for cell in row[1:]:
            try:
                value = int(cell)
            except ValueError:
                raise ParseError(f"{counts_path}:{lineno}: non-integer count {cell!r}") from None
            if value < 0:
                raise ParseError(f"{counts_path}:{lineno}: negative count {value}")
            cells.append(value)
        if row[0] in by_spot:
            raise IngestionError(f"duplicate spot id {row[0]!r} in {counts_path}")
        by_spot[row[0]] = len(values)
        values.append(cells)
    counts = np.array(values, dtype=np.int64).reshape(len(values), len(genes))

    coord_rows = _read_tsv(coords_path)
    spot_ids, xy = [], []
    for lineno, row in enumerate(coord_rows[1:], start=2):
        if len(row) < 3:
            raise ParseError(f"{coords_path}:{lineno}: expected spot_id, x, y")
        try:
            xy.append((float(row[1]), float(row[2])))
        except ValueError:
            raise ParseError(f"{coords_path}:{lineno}: non-numeric coordinate") from None
        spot_ids.append(row[0])
    missing = [s for s in spot_ids if s not in by_spot]
    if missing:
        raise IngestionError(f"spot {missing[0]!r} present in coords but missing from counts")
    extra = sorted(set(by_spot) - set(spot_ids))
    if extra:
        raise IngestionError(f"spot {extra[0]!r} present in counts but missing from coords")
    counts = counts[[by_spot[s] for s in spot_ids]]

    labels = label_names = None
    if labels_path is not None:
        raw = {}
        for lineno, row in enumerate(_read_tsv(labels_path)[1:], start=2):
            if len(row) < 2:
                raise ParseError(f"{labels_path}:{lineno}: expected spot_id, label")
            raw[row[0]] = row[1]
        missing = [s for s in spot_ids if s not in raw]
        if missing:
            raise IngestionError(f"spot {missing[0]!r} has no label in {labels_path}")
        labels, label_names = encode_labels([raw[s] for s in spot_ids])
    return SpatialSlice(counts, np.array(xy, dtype=np.float64).reshape(-1, 2), genes, spot_ids, labels, label_names)


def encode_labels(values: list[str]) -> tuple[np.ndarray, list[str]]:
    """Integers pass through; anything else is dictionary-encoded in first-seen order."""
    try:
        ints = [int(v) for v in values]
        names = [str(v) for v in sorted(set(ints))]
        return np.array(ints, dtype=np.int64), names
    except ValueError:
        codes: dict[str, int] = {}
        for v in values:
            codes.setdefault(v, len(codes))
        return np.array([codes[v] for v in values], dtype=np.int64), list(codes)


# preprocessing

def preprocess(slice_: SpatialSlice, cfg: PreprocessConfig | None = None) -> Preprocessed:
    cfg = (cfg or PreprocessConfig()).validate()
    counts = np.asarray(slice_.counts, dtype=np.float64)
    n, g = counts.shape
    if n < 2:
        raise PreprocessingError("need at least 2 spots")
    library = counts.sum(axis=1)
    empty = np.flatnonzero(library <= 0)
    if len(empty):
        ids = ", ".join(slice_.spot_ids[i] for i in empty[:10])
        raise PreprocessingError(f"all-zero spots: {ids}")
    median = float(np.median(library))
    size_factors = library / median
    target = median if cfg.target_sum is None else float(cfg.target_sum)
    scaled = counts / library[:, None] * target

    n_hvg = min(int(cfg.n_hvg), g)
    genes = select_hvg(scaled, n_hvg)
    normalized = scaled[:, genes]
    if cfg.log_transform:
        normalized = np.log1p(normalized)
    return Preprocessed(normalized, counts[:, genes], size_factors, genes)


def select_hvg(scaled: np.ndarray, n_top: int) -> np.ndarray:
    """Top genes by dispersion (variance / mean) of library-scaled counts.

    Ties, including constant genes, keep their column order.
    """
    mean = scaled.mean(axis=0)
    var = scaled.var(axis=0, ddof=1)
    dispersion = np.full_like(mean, -np.inf)
    ok = mean > 0
    dispersion[ok] = var[ok] / mean[ok]
    order = np.argsort(-dispersion, kind="stable")
    return np.sort(order[:n_top])


# graphs

def _knn_union(dist_rows, n: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Union of directed kNN relations; ``dist_rows(start, stop)`` yields distance blocks."""
    pairs = set()
    chunk = 512
    for start in range(0, n, chunk):
        block = dist_rows(start, min(n, start + chunk))
        for r, row in enumerate(block):
            i = start + r
            row = row.copy()
            row[i] = np.inf
            nearest = np.argsort(row, kind="stable")[:k]
            for j in nearest:
                pairs.add((min(i, int(j)), max(i, int(j))))
    if not pairs:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    arr = np.array(sorted(pairs), dtype=np.int64)
    return arr[:, 0], arr[:, 1]


def build_spatial_graph(coords: np.ndarray, k: int = 6) -> WeightedGraph:
    """Union kNN graph weighted by Euclidean distance."""
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    if k < 1 or k >= n:
        raise ConfigError(f"spatial k={k} must be in [1, n_spots={n})")

    def rows(a, b):
        diff = coords[a:b, None, :] - coords[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    u, v = _knn_union(rows, n, k)
    w = np.sqrt(((coords[u] - coords[v]) ** 2).sum(-1))
    return WeightedGraph(n, u, v, w)


def pca_project(x: np.ndarray, n_components: int) -> np.ndarray:
    """Project onto the leading right singular vectors (uncentered)."""
    x = np.asarray(x, dtype=np.float64)
    c = min(n_components, *x.shape)
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    # sign convention: largest-magnitude loading of each component positive
    signs = np.sign(vt[np.arange(c), np.abs(vt[:c]).argmax(axis=1)])
    signs[signs == 0] = 1.0
    return x @ (vt[:c].T * signs)


def build_expression_graph(expression: np.ndarray, k: int = 15, n_pcs: int = 50, spot_ids=None) -> WeightedGraph:
    """Union kNN graph under cosine dissimilarity of PCA-projected expression."""
    proj = pca_project(expression, n_pcs)
    n = len(proj)
    if k < 1 or k >= n:
        raise ConfigError(f"expression k={k} must be in [1, n_spots={n})")
    norms = np.linalg.norm(proj, axis=1)
    zero = np.flatnonzero(norms == 0)
    if len(zero):
        name = spot_ids[zero[0]] if spot_ids is not None else int(zero[0])
        raise GraphError(f"spot {name!r} has a zero expression vector after projection")
    unit = proj / norms[:, None]

    def rows(a, b):
        return np.clip(1.0 - unit[a:b] @ unit.T, 0.0, 2.0)

    u, v = _knn_union(rows, n, k)
    w = np.clip(1.0 - (unit[u] * unit[v]).sum(-1), 0.0, 2.0)
    return WeightedGraph(n, u, v, w)


def median_nn_distance(coords: np.ndarray) -> float:
    coords = np.asarray(coords, dtype=np.float64)
    best = np.empty(len(coords))
    for start in range(0, len(coords), 512):
        diff = coords[start : start + 512, None, :] - coords[None, :, :]
        d = np.sqrt((diff**2).sum(-1))
        d[np.arange(len(d)), np.arange(start, start + len(d))] = np.inf
        best[start : start + 512] = d.min(axis=1)
    return float(np.median(best))


# synthetic data

def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator; ``stream`` ids give independent sub-streams."""
    if not stream:
        return np.random.Generator(np.random.Philox(int(seed)))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def sample_zinb(rng: np.random.Generator, mu: np.ndarray, theta: float, pi: float) -> np.ndarray:
    """Gamma-Poisson negative binomial with extra zeros at rate ``pi``."""
    lam = rng.gamma(shape=theta, scale=mu / theta)
    x = rng.poisson(lam)
    x[rng.random(mu.shape) < pi] = 0
    return x.astype(np.int64)


def synth_slice(
    n_domains: int,
    spots_per_domain: int,
    n_genes: int,
    seed: int,
    *,
    pi: float = 0.1,
    theta: float = 5.0,
    separation: float = 8.0,
    marker_fraction: float = 0.3,
    fold_change: float = 4.0,
    base_mean: float = 2.0,
    library_sd: float = 0.2,
) -> SpatialSlice:
    """Gaussian spatial blobs, one expression program per domain, ZINB counts.

    Domain centres sit on a circle so neighbouring centres are ``separation``
    blob standard deviations apart. Each domain up-regulates a random subset of
    ``marker_fraction * n_genes`` genes by ``fold_change``.
    """
    if min(n_domains, spots_per_domain, n_genes) < 1:
        raise ConfigError("n_domains, spots_per_domain and n_genes must all be >= 1")
    rng = make_rng(seed)
    if n_domains == 1:
        centres = np.zeros((1, 2))
    else:
        radius = separation / (2 * np.sin(np.pi / n_domains))
        angle = 2 * np.pi * np.arange(n_domains) / n_domains
        centres = radius * np.column_stack([np.cos(angle), np.sin(angle)])
    labels = np.repeat(np.arange(n_domains), spots_per_domain)
    coords = centres[labels] + rng.normal(size=(len(labels), 2))

    gene_base = base_mean * np.exp(rng.normal(0.0, 0.5, size=n_genes))
    programs = np.tile(gene_base, (n_domains, 1))
    n_markers = max(1, int(round(marker_fraction * n_genes)))
    for d in range(n_domains):
        markers = rng.choice(n_genes, size=n_markers, replace=False)
        programs[d, markers] *= fold_change
    library = np.exp(rng.normal(0.0, library_sd, size=len(labels)))
    means = library[:, None] * programs[labels]
    counts = sample_zinb(rng, means, theta, pi)
    # every spot needs a nonzero library for preprocessing
    for i in np.flatnonzero(counts.sum(axis=1) == 0):
        counts[i, int(np.argmax(means[i]))] = 1

    width = len(str(len(labels) - 1))
    spot_ids = [f"spot{i:0{width}d}" for i in range(len(labels))]
    gene_names = [f"gene{j:0{len(str(n_genes - 1))}d}" for j in range(n_genes)]
    return SpatialSlice(
        counts,
        coords,
        gene_names,
        spot_ids,
        labels=labels,
        label_names=[str(d) for d in range(n_domains)],
        true_means=means,
    )


# file output

def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_slice(slice_: SpatialSlice, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"counts": out / "counts.tsv", "coords": out / "coords.tsv"}
    with open(paths["counts"], "w", newline="") as fh:
        fh.write("spot_id\t" + "\t".join(slice_.gene_names) + "\n")
        for sid, row in zip(slice_.spot_ids, np.asarray(slice_.counts, dtype=np.int64)):
            fh.write(sid + "\t" + "\t".join(str(int(c)) for c in row) + "\n")
    with open(paths["coords"], "w", newline="") as fh:
        fh.write("spot_id\tx\ty\n")
        for sid, (x, y) in zip(slice_.spot_ids, slice_.coords):
            fh.write(f"{sid}\t{fmt(x)}\t{fmt(y)}\n")
    if slice_.labels is not None:
        paths["labels"] = out / "labels.tsv"
        with open(paths["labels"], "w", newline="") as fh:
            fh.write("spot_id\tlabel\n")
            for sid, lab in zip(slice_.spot_ids, slice_.labels):
                fh.write(f"{sid}\t{int(lab)}\n")
    return paths
