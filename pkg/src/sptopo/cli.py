"""Command-line entry point: synth, topo, run, sweep, impute, config.

Exit codes: 0 success, 1 a pipeline stage failed, 2 bad usage or config.
"""
from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import pipeline
from .config import RunConfig, load_config, write_default_config
from .data import build_expression_graph, build_spatial_graph, load_slice, make_rng, preprocess, synth_slice, write_slice
from .errors import ConfigError, SptopoError
from .model import forward, init_params, load_params, save_params
from .numkit.autodiff import Var
from .topology import epi_for_all_spots, write_diagram, write_image_stack
from .topology.diagram import ensure_dir

log = logging.getLogger("sptopo")

EXIT_OK, EXIT_STAGE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class StageFailure(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


@contextmanager
def stage(name):
    """Re-raise anything but config problems as a failure of ``name``."""
    try:
        yield
    except ConfigError:
        raise
    except SptopoError as exc:
        raise StageFailure(exc.stage if exc.stage != "unknown" else name, exc) from exc
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        raise StageFailure(name, exc) from exc


# argument handling

def _grid(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _add_inputs(p: argparse.ArgumentParser, labels=True) -> None:
    p.add_argument("--config", help="JSON run configuration (see `config --init`)")
    p.add_argument("--counts", help="counts TSV: spot_id then one column per gene")
    p.add_argument("--coords", help="coordinates TSV: spot_id, x, y")
    if labels:
        p.add_argument("--labels", help="optional labels TSV: spot_id, label")
    p.add_argument("--out", help="output directory")


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--n-clusters", type=int, dest="n_clusters")
    p.add_argument("--ablate", action="append", choices=("topo", "scdom"), default=[], help="disable a module; repeatable")
    p.add_argument("--parallel", action="store_true", help="spot-parallel topology")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sptopo", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic slice")
    p.add_argument("--domains", type=int, required=True)
    p.add_argument("--spots-per", type=int, required=True, dest="spots_per")
    p.add_argument("--genes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pi", type=float, default=0.1, help="zero-inflation probability")
    p.add_argument("--theta", type=float, default=5.0, help="NB dispersion")
    p.add_argument("--separation", type=float, default=8.0, help="domain centre spacing in blob SDs")
    p.add_argument("--fold-change", type=float, default=4.0, dest="fold_change")
    p.add_argument("--out", required=True)

    p = sub.add_parser("topo", help="per-spot diagrams and persistence images, no training")
    _add_inputs(p, labels=False)
    p.add_argument("--radius", type=float)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--workers", type=_positive_int)

    p = sub.add_parser("run", help="full pipeline: topology, training, clustering, metrics")
    _add_inputs(p)
    _add_training(p)

    p = sub.add_parser("sweep", help="ARI grid over lambda1 x lambda2")
    _add_inputs(p)
    _add_training(p)
    p.add_argument("--lambda1-grid", type=_grid, default=[1e-3, 1e-2, 1e-1], dest="lambda1_grid")
    p.add_argument("--lambda2-grid", type=_grid, default=[1e-3, 1e-2, 1e-1], dest="lambda2_grid")

    p = sub.add_parser("impute", help="write the ZINB mean matrix as denoised expression")
    _add_inputs(p, labels=False)
    _add_training(p)
    p.add_argument("--params", help="params.bin from a previous run; skips training")

    p = sub.add_parser("config", help="emit the full default configuration")
    p.add_argument("--init", required=True, metavar="PATH")
    return parser


def resolve_config(args) -> RunConfig:
    """Flags override the file, which overrides the defaults."""
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig.defaults()
    for key in ("counts", "coords", "labels", "out"):
        if getattr(args, key, None) is not None:
            cfg.update("io", key, getattr(args, key))
    for key in ("seed", "epochs", "lr", "lambda1", "lambda2", "n_clusters"):
        if getattr(args, key, None) is not None:
            cfg.update("train", key, getattr(args, key))
    ablate = getattr(args, "ablate", None) or []
    if "topo" in ablate:
        cfg.update("train", "topo_on", False)
    if "scdom" in ablate:
        cfg.update("train", "scdom_on", False)
    if getattr(args, "radius", None) is not None:
        cfg.update("topo", "radius", args.radius)
    if getattr(args, "parallel", False):
        cfg.update("topo", "parallel", True)
    if getattr(args, "workers", None) is not None:
        cfg.update("topo", "workers", args.workers)
    cfg.to_train_config()
    return cfg


def _require_io(cfg: RunConfig, *keys):
    io = cfg.io_config()
    missing = [k for k in keys if getattr(io, k) is None]
    if missing:
        raise UsageError("missing required input(s): " + ", ".join("--" + k for k in missing))
    return io


def _out_dir(path) -> Path:
    try:
        return ensure_dir(path)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from None


def _load(io, labels=True):
    with stage("load"):
        return load_slice(io.counts, io.coords, io.labels if labels else None)


# commands

def cmd_synth(args) -> int:
    if min(args.domains, args.spots_per, args.genes) < 1:
        raise UsageError("--domains, --spots-per and --genes must all be >= 1")
    slice_ = synth_slice(
        args.domains,
        args.spots_per,
        args.genes,
        args.seed,
        pi=args.pi,
        theta=args.theta,
        separation=args.separation,
        fold_change=args.fold_change,
    )
    out = _out_dir(args.out)
    try:
        write_slice(slice_, out)
    except OSError as exc:
        raise UsageError(f"cannot write to {out}: {exc}") from None
    log.info("wrote %d spots x %d genes to %s", slice_.n_spots, slice_.n_genes, out)
    return EXIT_OK


def _write_diagrams(out: Path, spot_ids, spatial, expression) -> None:
    for name, diagrams in (("spatial", spatial), ("expression", expression)):
        folder = ensure_dir(out / "diagrams" / name)
        for sid, d in zip(spot_ids, diagrams):
            write_diagram(d, folder / f"{sid}.tsv")


def cmd_topo(args) -> int:
    cfg = resolve_config(args)
    io = _require_io(cfg, "counts", "coords", "out")
    train_cfg = cfg.to_train_config()
    out = _out_dir(io.out)
    slice_ = _load(io, labels=False)
    with stage("preprocess"):
        pre = preprocess(slice_, train_cfg.preprocess)
    with stage("graph"):
        spatial = build_spatial_graph(slice_.coords, train_cfg.preprocess.k_spatial)
        expression = build_expression_graph(
            pre.normalized, train_cfg.preprocess.k_expression, train_cfg.preprocess.n_pcs, slice_.spot_ids
        )
    with stage("topology"):
        epi = epi_for_all_spots(spatial, expression, slice_.coords, train_cfg.topo)
    with stage("write"):
        _write_diagrams(out, slice_.spot_ids, epi.spatial_diagrams, epi.expression_diagrams)
        meta = train_cfg.topo.image_meta()
        write_image_stack(epi.spatial, slice_.spot_ids, out / "epi_spatial.tsv", meta)
        write_image_stack(epi.expression, slice_.spot_ids, out / "epi_expression.tsv", meta)
    log.info("wrote diagrams and images for %d spots to %s (radius %.6g)", slice_.n_spots, out, epi.radius)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    io = _require_io(cfg, "counts", "coords", "out")
    train_cfg = cfg.to_train_config()
    out = _out_dir(io.out)
    slice_ = _load(io)
    with stage("prepare"):
        prepared = pipeline.prepare(slice_, train_cfg)
    with stage("train"):
        result = pipeline.train(prepared, train_cfg)
    with stage("cluster"):
        clusters = pipeline.evaluate(prepared, result, train_cfg)
    with stage("write"):
        ids = slice_.spot_ids
        pipeline.write_embedding(result.state.h.value, ids, out / "embedding.tsv")
        pipeline.write_labels(clusters.labels, ids, out / "labels.tsv")
        pipeline.write_metrics(clusters, train_cfg.epochs, out / "metrics.json")
        pipeline.write_loss_trace(result.components, out / "loss_trace.tsv")
        save_params(result.params, out / "params.bin")
        if prepared.epi is not None:
            _write_diagrams(out, ids, prepared.epi.spatial_diagrams, prepared.epi.expression_diagrams)
        (out / "config.json").write_text(cfg.dumps())
    log.info("ari=%s nmi=%s final loss %.6g", clusters.ari, clusters.nmi, result.loss_trace[-1])
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    io = _require_io(cfg, "counts", "coords", "out")
    train_cfg = cfg.to_train_config()
    for v in args.lambda1_grid + args.lambda2_grid:
        if not 1e-3 <= v <= 1e3:
            raise UsageError(f"grid values must lie in [1e-3, 1e3], got {v}")
    out = _out_dir(io.out)
    slice_ = _load(io)
    with stage("prepare"):
        prepared = pipeline.prepare(slice_, train_cfg)
    with stage("sweep"):
        result = pipeline.sweep(slice_, args.lambda1_grid, args.lambda2_grid, train_cfg, prepared=prepared)
    with stage("write"):
        pipeline.write_sweep(result, out / "sweep_ari.tsv", "ari")
        pipeline.write_sweep(result, out / "sweep_nmi.tsv", "nmi")
    log.info("ARI spread %.4g", float(np.nanmax(result.ari) - np.nanmin(result.ari)))
    return EXIT_OK


def cmd_impute(args) -> int:
    cfg = resolve_config(args)
    io = _require_io(cfg, "counts", "coords", "out")
    train_cfg = cfg.to_train_config()
    out = _out_dir(io.out)
    slice_ = _load(io, labels=False)
    with stage("prepare"):
        prepared = pipeline.prepare(slice_, train_cfg)
    if args.params:
        with stage("load"):
            template = init_params(
                prepared.inputs.x.shape[1], train_cfg.topo.resolution, train_cfg.model, make_rng(0)
            )
            params = load_params(args.params, template)
        with stage("forward"):
            state = forward({k: Var(v, name=k) for k, v in params.items()}, prepared.inputs, train_cfg.model, train_cfg.topo_on)
    else:
        with stage("train"):
            state = pipeline.train(prepared, train_cfg).state
    with stage("write"):
        genes = [slice_.gene_names[j] for j in prepared.pre.genes]
        pipeline.write_matrix(pipeline.impute(state), slice_.spot_ids, genes, out / "imputed.tsv")
    return EXIT_OK


def cmd_config(args) -> int:
    try:
        write_default_config(args.init)
    except OSError as exc:
        raise UsageError(f"cannot write {args.init}: {exc}") from None
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "topo": cmd_topo,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "impute": cmd_impute,
    "config": cmd_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"sptopo {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageFailure as exc:
        print(f"sptopo {args.command}: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
