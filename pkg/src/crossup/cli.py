"""Command line interface: sample-mesh, make-dataset, train, upsample,
evaluate, export-field.

stdout carries one machine-readable summary line per command; progress and
warnings go to stderr. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric
failure.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import UpsampleConfig, apply_config_values, load_config_file
from .errors import DataError, NumericError
from .field.export import export_field
from .field.solver import optimize_field
from .geometry import PointCloud
from .geometry.io import read_cloud, read_obj, write_cloud, write_xyz
from .geometry.mesh import sample_mesh
from .geometry.normals import estimate_normals, orient_away_from_centroid
from .geometry import SpatialIndex
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import NetworkWeights
from .objectives.metrics import evaluate_cloud
from .pipeline import upsample_full_shape, upsample_iterative
from .training.dataset import load_dataset, make_dataset, save_dataset, split_dataset
from .training.shapes import SHAPE_CATALOG, TRAIN_SHAPES, build_shape
from .training.trainer import TrainConfig, train

CHECKPOINT_DIR_ENV = "CROSSUP_CHECKPOINT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on usage errors; the CLI contract says 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _resolve_checkpoint(path: str, for_write: bool = False) -> str:
    """Bare filenames fall back to $CROSSUP_CHECKPOINT_DIR when set."""
    base = os.environ.get(CHECKPOINT_DIR_ENV)
    if os.path.dirname(path) or not base:
        return path
    if for_write or not os.path.exists(path):
        return os.path.join(base, path)
    return path


def _add_common(p: _Parser):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=1, help="worker thread cap (default 1)")
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="force fully sequential execution (threads=1)",
    )
    p.add_argument("--config", default=None, help="key = value config file overriding defaults")


def _upsample_cfg(args) -> UpsampleConfig:
    cfg = UpsampleConfig()
    if getattr(args, "config", None):
        apply_config_values(load_config_file(args.config), cfg)
    for name in ("ratio", "seed", "threads"):
        if getattr(args, name, None) is not None:
            setattr(cfg, name, getattr(args, name))
    if getattr(args, "iters", None) is not None:
        cfg.iterations = args.iters
    if getattr(args, "normals", None):
        cfg.normal_backend = args.normals
    if getattr(args, "field", None):
        cfg.field_backend = args.field
    if args.deterministic:
        cfg.threads = 1
    cfg.validate()
    return cfg


def build_parser() -> _Parser:
    parser = _Parser(prog="crossup", description=__doc__)
    parser.add_argument("--version", action="version", version=f"crossup {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("sample-mesh", help="Poisson-disk sample a mesh surface")
    p.add_argument("--mesh", default=None, help="OBJ mesh file to sample")
    p.add_argument("--shape", default=None, help=f"built-in shape name ({', '.join(SHAPE_CATALOG)})")
    p.add_argument("--count", type=int, required=True, help="target sample count")
    p.add_argument("--radius", type=float, default=None, help="explicit disk radius (default: auto)")
    p.add_argument("--output", required=True, help="output cloud (.xyz or .ply)")
    _add_common(p)

    p = sub.add_parser("make-dataset", help="fabricate training patches from built-in shapes")
    p.add_argument("--output", required=True, help="dataset directory to create")
    p.add_argument("--shapes", default=",".join(TRAIN_SHAPES), help="comma-separated shape names")
    p.add_argument("--patches-per-shape", type=int, default=50, help="patch crops per shape")
    p.add_argument("--gt-points", type=int, default=512, help="GT points per patch")
    p.add_argument("--input-points", type=int, default=64, help="sparse input points per patch")
    p.add_argument("--base-points", type=int, default=8192, help="dense base cloud size per shape")
    _add_common(p)

    p = sub.add_parser("train", help="train the mapping network on a patch dataset")
    p.add_argument("--dataset", required=True, help="dataset directory from make-dataset")
    p.add_argument("--output", default="model.ckpt", help="checkpoint path (default model.ckpt)")
    p.add_argument("--csv", default=None, help="write per-iteration loss curves CSV here")
    p.add_argument("--epochs", type=int, default=None, help="training epochs")
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate")
    p.add_argument("--batch-size", type=int, default=None, help="patches per optimizer step")
    p.add_argument("--inner-iters", type=int, default=None, help="refinement passes per batch")
    p.add_argument("--desk", action="store_true", help="use the quick desk-scale preset")
    _add_common(p)

    p = sub.add_parser("upsample", help="upsample a point cloud at an arbitrary ratio")
    p.add_argument("--input", required=True, help="input cloud (.xyz or .ply)")
    p.add_argument("--output", required=True, help="output cloud (.xyz or .ply)")
    p.add_argument("--ratio", type=float, required=True, help="upsampling ratio r > 1")
    p.add_argument("--iters", type=int, default=None, help="refinement iterations D (default 10)")
    p.add_argument("--checkpoint", required=True, help="trained weights file")
    p.add_argument("--normals", choices=("pca", "learned"), default=None, help="normal backend")
    p.add_argument("--field", choices=("solver", "learned"), default=None, help="cross-field backend")
    p.add_argument("--trace", default=None, help="directory for per-iteration clouds (patch mode)")
    p.add_argument("--patch-size", type=int, default=256, help="points per patch in full-shape mode")
    p.add_argument("--seeds", type=int, default=None, help="patch seed count (default ~2n/patch-size)")
    p.add_argument(
        "--mode",
        choices=("auto", "patch", "full"),
        default="auto",
        help="patch: single-patch pipeline; full: crop+merge; auto: by input size",
    )
    _add_common(p)

    p = sub.add_parser("evaluate", help="compare an upsampled cloud against ground truth")
    p.add_argument("--pred", required=True, help="predicted cloud")
    p.add_argument("--gt-points", required=True, help="reference cloud")
    p.add_argument("--gt-mesh", default=None, help="reference OBJ mesh for P2F")
    p.add_argument("--uni-ref", type=int, default=50000, help="dense samples for the Uni metric")
    p.add_argument("--name", default=None, help="record label (default: pred filename)")
    _add_common(p)

    p = sub.add_parser("export-field", help="estimate and export a cross field for inspection")
    p.add_argument("--input", required=True, help="input cloud (.xyz or .ply)")
    p.add_argument("--output", required=True, help="output PLY with tangent properties")
    p.add_argument("--segments", default=None, help="optional OBJ with 4-RoSy direction segments")
    p.add_argument("--sweeps", type=int, default=10, help="field solver sweeps")
    p.add_argument("--k1", type=int, default=6, help="smoothness graph size")
    p.add_argument("--pca-k", type=int, default=16, help="normal estimation neighborhood")
    _add_common(p)
    return parser


def _cmd_sample_mesh(args) -> int:
    if (args.mesh is None) == (args.shape is None):
        raise _UsageError("give exactly one of --mesh or --shape")
    mesh = read_obj(args.mesh) if args.mesh else build_shape(args.shape)
    radius = "auto" if args.radius is None else args.radius
    cloud = sample_mesh(mesh, args.count, radius=radius, seed=args.seed)
    write_cloud(args.output, cloud)
    print(f"output={args.output} points={len(cloud.points)}")
    return EXIT_OK


def _cmd_make_dataset(args) -> int:
    names = [s.strip() for s in args.shapes.split(",") if s.strip()]
    if not names:
        raise _UsageError("--shapes must list at least one shape")
    meshes = {name: build_shape(name) for name in names}
    pairs = make_dataset(
        meshes,
        patches_per_shape=args.patches_per_shape,
        gt_points=args.gt_points,
        input_points=args.input_points,
        base_points=args.base_points,
        seed=args.seed,
    )
    save_dataset(pairs, args.output)
    print(f"output={args.output} patches={len(pairs)}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = UpsampleConfig(seed=args.seed, threads=1 if args.deterministic else args.threads)
    tcfg = TrainConfig.desk_preset(seed=args.seed) if args.desk else TrainConfig(seed=args.seed)
    if args.config:
        apply_config_values(load_config_file(args.config), cfg, tcfg)
    for flag, attr in (("epochs", "epochs"), ("lr", "lr"), ("batch_size", "batch_size"),
                       ("inner_iters", "inner_iters")):
        value = getattr(args, flag)
        if value is not None:
            setattr(tcfg, attr, value)
    tcfg.validate()
    cfg.validate()
    pairs = load_dataset(args.dataset)
    train_set, val_set = split_dataset(pairs, seed=tcfg.seed)
    out = _resolve_checkpoint(args.output, for_write=True)
    result = train(
        train_set,
        val_set,
        tcfg,
        cfg,
        csv_path=args.csv,
        checkpoint_path=out,
    )
    save_checkpoint(out, result.weights, config_echo=cfg.echo())
    print(f"checkpoint={out} best_val={result.best_val:.9g} steps={result.steps}")
    return EXIT_OK


def _write_trace(trace_dir: str, trace) -> None:
    os.makedirs(trace_dir, exist_ok=True)
    for snap in trace:
        write_xyz(os.path.join(trace_dir, f"iter_{snap.iteration:03d}_input.xyz"),
                  PointCloud(points=snap.input_points))
        write_xyz(os.path.join(trace_dir, f"iter_{snap.iteration:03d}_candidates.xyz"),
                  PointCloud(points=snap.candidates))


def _cmd_upsample(args) -> int:
    cfg = _upsample_cfg(args)
    cloud = read_cloud(args.input)
    weights, _echo = load_checkpoint(_resolve_checkpoint(args.checkpoint))
    n = len(cloud.points)
    mode = args.mode
    if mode == "auto":
        mode = "full" if n > args.patch_size else "patch"
    if mode == "patch":
        result, trace = upsample_iterative(cloud, weights, cfg)
        skipped = sum(s.skipped for s in trace)
        if skipped:
            print(f"warning: {skipped} degenerate charts passed through unchanged", file=sys.stderr)
        if args.trace:
            _write_trace(args.trace, trace)
    else:
        if args.trace:
            print("warning: --trace applies to patch mode; ignored", file=sys.stderr)
        result = upsample_full_shape(cloud, weights, cfg, patch_size=args.patch_size,
                                     seed_count=args.seeds)
    write_cloud(args.output, result)
    print(f"output={args.output} points={len(result.points)} mode={mode}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    pred = read_cloud(args.pred)
    gt = read_cloud(args.gt_points)
    mesh = read_obj(args.gt_mesh) if args.gt_mesh else None
    dense = None
    if mesh is not None and args.uni_ref > 0:
        dense = sample_mesh(mesh, args.uni_ref, seed=args.seed).points
    name = args.name or os.path.basename(args.pred)
    report = evaluate_cloud(name, pred, gt, gt_mesh=mesh, dense_reference=dense, seed=args.seed)
    print(report.record())
    return EXIT_OK


def _cmd_export_field(args) -> int:
    cloud = read_cloud(args.input)
    pts = cloud.points
    if cloud.normals is None:
        index = SpatialIndex(pts)
        k = min(args.pca_k, len(pts))
        normals, _conf = estimate_normals(pts, index, k=k)
        normals = orient_away_from_centroid(pts, normals, index, k=k)
        cloud = PointCloud(points=pts, normals=normals)
    frames, trace = optimize_field(cloud, sweeps=args.sweeps, rng_seed=args.seed, k1=args.k1)
    export_field(args.output, cloud, frames, segments_path=args.segments)
    print(f"output={args.output} points={len(pts)} energy={trace[-1]:.9g}")
    return EXIT_OK


_COMMANDS = {
    "sample-mesh": _cmd_sample_mesh,
    "make-dataset": _cmd_make_dataset,
    "train": _cmd_train,
    "upsample": _cmd_upsample,
    "evaluate": _cmd_evaluate,
    "export-field": _cmd_export_field,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return EXIT_USAGE
        if getattr(args, "deterministic", False):
            args.threads = 1
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
