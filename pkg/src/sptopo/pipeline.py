"""Training, clustering, evaluation and imputation for one slice."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cluster import ClusterResult, kmeans
from .data import (
    PreprocessConfig,
    Preprocessed,
    SpatialSlice,
    WeightedGraph,
    build_expression_graph,
    build_spatial_graph,
    fmt,
    make_rng,
    preprocess,
)
from .errors import ConfigError, DomainError, TrainingError
from .metrics import ari, nmi
from .model import losses
from .model.network import ForwardState, ModelConfig, ModelInputs, forward, init_params, normalized_adjacency
from .numkit import AdamState, adam_step
from .numkit.autodiff import Var
from .topology import EPIResult, TopoConfig, epi_for_all_spots

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lambda1: float = 0.1
    lambda2: float = 0.1
    epochs: int = 100
    lr: float = 1e-3
    seed: int = 0
    n_clusters: Optional[int] = None  # None -> number of ground-truth classes
    restarts: int = 20
    negatives: Optional[int] = None  # None -> spatial k
    topo_on: bool = True
    scdom_on: bool = True
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    topo: TopoConfig = field(default_factory=TopoConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def validate(self) -> "TrainConfig":
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be >= 0")
        if int(self.epochs) < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.n_clusters is not None and int(self.n_clusters) < 2:
            raise ConfigError("n_clusters must be >= 2")
        if int(self.restarts) < 1:
            raise ConfigError("restarts must be >= 1")
        self.preprocess.validate()
        self.topo.validate()
        self.model.validate()
        return self


@dataclass
class Prepared:
    """Preprocessed data, graphs and topological features for one slice."""

    slice: SpatialSlice
    pre: Preprocessed
    spatial: WeightedGraph
    expression: WeightedGraph
    epi: Optional[EPIResult]
    inputs: ModelInputs


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    state: ForwardState
    loss_trace: list[float]
    components: list[dict[str, float]]


def prepare(slice_: SpatialSlice, cfg: TrainConfig) -> Prepared:
    """Preprocess, build both graphs and (when topology is on) the per-spot images."""
    cfg.validate()
    pre = preprocess(slice_, cfg.preprocess)
    spatial = build_spatial_graph(slice_.coords, cfg.preprocess.k_spatial)
    expression = build_expression_graph(pre.normalized, cfg.preprocess.k_expression, cfg.preprocess.n_pcs, slice_.spot_ids)
    epi = epi_for_all_spots(spatial, expression, slice_.coords, cfg.topo) if cfg.topo_on else None
    inputs = ModelInputs(
        x=pre.normalized,
        raw=pre.raw,
        size_factors=pre.size_factors,
        a_hat_s=normalized_adjacency(spatial.adjacency()),
        a_hat_x=normalized_adjacency(expression.adjacency()),
        epi_s=None if epi is None else epi.spatial,
        epi_x=None if epi is None else epi.expression,
        neighbors=spatial.neighbor_lists(),
    )
    return Prepared(slice_, pre, spatial, expression, epi, inputs)


def _wrap(params):
    return {k: Var(v, name=k) for k, v in params.items()}


def compute_losses(params: dict[str, Var], inputs: ModelInputs, cfg: TrainConfig, negatives):
    state = forward(params, inputs, cfg.model, cfg.topo_on)
    rec = losses.zinb_nll(inputs.raw, state.pi, state.mu, state.theta)
    con = losses.consistency_loss(state.h_sco, state.h_xco)
    sco = None
    if cfg.scdom_on:
        pos = losses.neighbor_pairs(inputs.neighbors)
        sco = losses.scdom_loss(state.h, [state.h_s, state.h_x, state.h_co], pos, negatives, inputs.n)
    total = losses.total_loss(rec, con, sco, cfg.lambda1, cfg.lambda2)
    parts = {
        "rec": float(rec.value),
        "con": float(con.value),
        "sco": 0.0 if sco is None else float(sco.value),
        "total": float(total.value),
    }
    return total, state, parts


def train(prepared: Prepared, cfg: TrainConfig, params: dict[str, np.ndarray] | None = None) -> TrainResult:
    """Full-batch Adam on the total loss for ``cfg.epochs`` epochs."""
    cfg.validate()
    inputs = prepared.inputs
    if params is None:
        params = init_params(inputs.x.shape[1], cfg.topo.resolution, cfg.model, make_rng(cfg.seed, 1))
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    neg_rng = make_rng(cfg.seed, 2)
    m = cfg.negatives or cfg.preprocess.k_spatial
    opt = AdamState(lr=cfg.lr)
    trace, components = [], []
    for epoch in range(int(cfg.epochs)):
        negatives = losses.sample_negatives(inputs.neighbors, m, neg_rng) if cfg.scdom_on else None
        leaves = _wrap(params)
        try:
            total, _, parts = compute_losses(leaves, inputs, cfg, negatives)
        except DomainError as exc:  # NaN reaching a special function
            raise TrainingError(f"non-finite values at epoch {epoch}: {exc}") from exc
        if not np.isfinite(total.value):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        total.backward()
        grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in leaves.items()}
        adam_step(params, grads, opt)
        trace.append(parts["total"])
        components.append(parts)
        log.debug("epoch %d loss %.6g", epoch, parts["total"])
    state = forward(_wrap(params), inputs, cfg.model, cfg.topo_on)
    return TrainResult(params, state, trace, components)


def evaluate(prepared: Prepared, result: TrainResult, cfg: TrainConfig) -> ClusterResult:
    """k-means on the fused embedding, scored against labels when present."""
    labels = prepared.slice.labels
    k = cfg.n_clusters
    if k is None:
        if labels is None:
            raise ConfigError("n_clusters is required when the slice has no labels")
        k = len(np.unique(labels))
    clusters = kmeans(result.state.h.value, int(k), cfg.restarts, cfg.seed)
    clusters.loss_trace = list(result.loss_trace)
    if labels is not None:
        clusters.ari = ari(labels, clusters.labels)
        clusters.nmi = nmi(labels, clusters.labels)
    return clusters


@dataclass
class RunResult:
    prepared: Prepared
    train: TrainResult
    clusters: ClusterResult


def run(slice_: SpatialSlice, cfg: TrainConfig, prepared: Prepared | None = None) -> RunResult:
    prepared = prepared or prepare(slice_, cfg)
    result = train(prepared, cfg)
    return RunResult(prepared, result, evaluate(prepared, result, cfg))


def impute(state: ForwardState) -> np.ndarray:
    """Denoised expression: the ZINB mean matrix."""
    return np.array(state.mu.value)


def cell_seed(seed: int, i: int, j: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(i), int(j)]).generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class SweepResult:
    lambda1: list[float]
    lambda2: list[float]
    ari: np.ndarray  # rows follow lambda1, columns lambda2
    nmi: np.ndarray


def _sweep_cell(args):
    prepared, cfg = args
    return run(prepared.slice, cfg, prepared).clusters


def sweep(
    slice_: SpatialSlice,
    lambda1_grid: Sequence[float],
    lambda2_grid: Sequence[float],
    cfg: TrainConfig,
    parallel: bool = False,
    prepared: Prepared | None = None,
) -> SweepResult:
    """Train one model per (lambda1, lambda2) cell; cell seeds derive from ``cfg.seed`` and the indices."""
    for value in list(lambda1_grid) + list(lambda2_grid):
        if not 1e-3 <= value <= 1e3:
            raise ConfigError(f"sweep values must lie in [1e-3, 1e3], got {value}")
    prepared = prepared or prepare(slice_, cfg)
    jobs = []
    for i, l1 in enumerate(lambda1_grid):
        for j, l2 in enumerate(lambda2_grid):
            cell = TrainConfig(**{**cfg.__dict__, "lambda1": float(l1), "lambda2": float(l2), "seed": cell_seed(cfg.seed, i, j)})
            jobs.append((prepared, cell))
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]
    shape = (len(lambda1_grid), len(lambda2_grid))
    ari_table = np.array([r.ari if r.ari is not None else np.nan for r in results]).reshape(shape)
    nmi_table = np.array([r.nmi if r.nmi is not None else np.nan for r in results]).reshape(shape)
    return SweepResult([float(v) for v in lambda1_grid], [float(v) for v in lambda2_grid], ari_table, nmi_table)


# file output

def write_embedding(h: np.ndarray, spot_ids, path) -> None:
    """TSV: spot_id then one column per latent dimension."""
    h = np.asarray(h, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        fh.write("spot_id\t" + "\t".join(f"h{j}" for j in range(h.shape[1])) + "\n")
        for sid, row in zip(spot_ids, h):
            fh.write(sid + "\t" + "\t".join(fmt(x) for x in row) + "\n")


def write_labels(labels, spot_ids, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("spot_id\tcluster\n")
        for sid, lab in zip(spot_ids, labels):
            fh.write(f"{sid}\t{int(lab)}\n")


def metrics_dict(clusters: ClusterResult, epochs: int) -> dict:
    trace = [float(x) for x in clusters.loss_trace]
    return {
        "ari": None if clusters.ari is None else float(clusters.ari),
        "nmi": None if clusters.nmi is None else float(clusters.nmi),
        "epochs": int(epochs),
        "final_loss": trace[-1] if trace else None,
        "loss_trace": trace,
    }


def write_metrics(clusters: ClusterResult, epochs: int, path) -> None:
    with open(path, "w") as fh:
        json.dump(metrics_dict(clusters, epochs), fh, indent=2)
        fh.write("\n")


def write_loss_trace(components: list[dict[str, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("epoch\ttotal\trec\tcon\tsco\n")
        for e, c in enumerate(components):
            fh.write(f"{e}\t{fmt(c['total'])}\t{fmt(c['rec'])}\t{fmt(c['con'])}\t{fmt(c['sco'])}\n")


def write_matrix(values: np.ndarray, row_ids, col_ids, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("spot_id\t" + "\t".join(col_ids) + "\n")
        for rid, row in zip(row_ids, np.asarray(values, dtype=np.float64)):
            fh.write(rid + "\t" + "\t".join(fmt(x) for x in row) + "\n")


def write_sweep(result: SweepResult, path, table: str = "ari") -> None:
    """Grid TSV: rows are lambda1 values, columns lambda2 values."""
    grid = getattr(result, table)
    with open(path, "w", newline="") as fh:
        fh.write("lambda1\\lambda2\t" + "\t".join(fmt(v) for v in result.lambda2) + "\n")
        for l1, row in zip(result.lambda1, grid):
            fh.write(fmt(l1) + "\t" + "\t".join(fmt(x) for x in row) + "\n")
