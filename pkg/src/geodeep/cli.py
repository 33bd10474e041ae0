"""Command-line entry point: every pipeline stage as a subcommand.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 resumable
runtime failure (rerun with --resume to continue).
"""

from __future__ import annotations

import argparse
import errno
import json
import sys
from pathlib import Path

from . import __version__
from .analysis import (
    KMeansModel,
    PCAModel,
    fit_kmeans,
    fit_pca,
    predict_kmeans,
    sample_pixels,
    transform_raster_pca,
    tsne_embed,
)
from .config import (
    SEED_CV,
    SEED_FOREST,
    SEED_KMEANS,
    SEED_SAMPLE,
    echo_config,
    load_config,
)
from .errors import ConfigError, GeodeepError, InputError, ResumableRunError
from .geoml import (
    ForestParams,
    KnnModel,
    RandomForestModel,
    build_dataset,
    cross_validate,
    extract_template,
    fit_knn,
    fit_random_forest,
    predict_knn,
    predict_rf,
    similarity_map,
    threshold_mask,
)
from .pipeline import open_stage_input, run_features
from .raster import open_raster, read_points

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RESUMABLE = 4


def _load_points(cfg: dict):
    path = cfg["input"]["points"]
    if not path:
        raise ConfigError("input.points is required for this subcommand")
    return read_points(path)


def _apply_overrides(cfg: dict, args) -> dict:
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        cfg["encoder"]["workers"] = args.workers
    if getattr(args, "pause_ms", None) is not None:
        cfg["encoder"]["pause_ms"] = args.pause_ms
    if getattr(args, "quantize", False):
        cfg["encoder"]["quantize"] = True
    if getattr(args, "max_batches", None) is not None:
        cfg["encoder"]["max_batches"] = args.max_batches
    return cfg


def cmd_features(cfg: dict, args) -> int:
    def progress(done: int, total: int) -> None:
        print(f"batch {done}/{total}")

    result = run_features(cfg, args.out, resume=args.resume,
                          dry_run=args.dry_run, progress=progress)
    plan = result.plan
    print(f"tiles: {plan.tile_count} "
          f"(sample {plan.sample_size}, stride {plan.stride})")
    print(f"output geometry: {result.out_w} x {result.out_h} cells, "
          f"{result.feature_dim} bands")
    if args.dry_run:
        cols = sorted({c for c, _ in plan.offsets})
        rows = sorted({r for _, r in plan.offsets})
        print(f"column offsets: {cols}")
        print(f"row offsets: {rows}")
        print(f"batches: {result.n_batches}")
        return EXIT_OK
    if not result.complete:
        print("inference stopped before completion; "
              "rerun with --resume to continue", file=sys.stderr)
        return EXIT_RESUMABLE
    echo_config(cfg, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_reduce(cfg: dict, args) -> int:
    ds = open_stage_input(cfg)
    seed = int(cfg["seed"])
    analysis = cfg["analysis"]
    sample = sample_pixels(ds, int(analysis["sample_size"]),
                           seed + SEED_SAMPLE)
    if analysis["method"] == "pca":
        model = fit_pca(sample, k=int(analysis["components"]))
        out = transform_raster_pca(ds, model, args.out,
                                   cfg["output"]["compression"])
        model.save(str(args.out) + ".model.json")
        print(f"wrote {args.out} ({out.band_count} bands)")
    elif analysis["method"] == "tsne":
        t = analysis["tsne"]
        result = tsne_embed(sample, dims=int(t["dims"]),
                            perplexity=float(t["perplexity"]),
                            iterations=int(t["iterations"]), seed=seed)
        Path(args.out).write_text(json.dumps({
            "cells": sample.cell_indices.tolist(),
            "embedding": result.embedding.tolist(),
            "kl_initial": result.kl_initial,
            "kl_final": result.kl_final,
        }))
        print(f"wrote {args.out} ({sample.n} points, "
              f"KL {result.kl_initial:.4f} -> {result.kl_final:.4f})")
    else:
        raise ConfigError(f"unknown analysis.method {analysis['method']!r}")
    echo_config(cfg, args.out)
    return EXIT_OK


def cmd_cluster(cfg: dict, args) -> int:
    ds = open_stage_input(cfg)
    seed = int(cfg["seed"])
    km = cfg["analysis"]["kmeans"]
    sample = sample_pixels(ds, int(cfg["analysis"]["sample_size"]),
                           seed + SEED_SAMPLE)
    model = fit_kmeans(sample, k=int(km["k"]), seed=seed + SEED_KMEANS,
                       max_iter=int(km["max_iter"]), tol=float(km["tol"]))
    predict_kmeans(ds, model, args.out, cfg["output"]["compression"])
    model.save(str(args.out) + ".model.json")
    echo_config(cfg, args.out)
    print(f"wrote {args.out} (k={model.k}, inertia {model.inertia:.4f})")
    return EXIT_OK


def cmd_similarity(cfg: dict, args) -> int:
    ds = open_stage_input(cfg)
    points = _load_points(cfg)
    sim_cfg = cfg["geoml"]["similarity"]
    tset = extract_template(ds, points, aggregation=sim_cfg["aggregation"])
    similarity_map(ds, tset, args.out, cfg["output"]["compression"])
    echo_config(cfg, args.out)
    print(f"wrote {args.out}")
    if sim_cfg["threshold"] is not None:
        mask_path = Path(args.out).with_name(Path(args.out).stem + "_mask.tif")
        threshold_mask(open_raster(args.out), float(sim_cfg["threshold"]),
                       mask_path, cfg["output"]["compression"])
        print(f"wrote {mask_path}")
    return EXIT_OK


def _fit_model(cfg: dict, data):
    seed = int(cfg["seed"])
    geoml = cfg["geoml"]
    if geoml["algorithm"] == "knn":
        knn = geoml["knn"]
        return fit_knn(data.x, data.y, data.labels, k=int(knn["k"]),
                       metric=knn["metric"])
    if geoml["algorithm"] == "random-forest":
        rf = geoml["random_forest"]
        return fit_random_forest(data.x, data.y, data.labels, ForestParams(
            n_trees=int(rf["n_trees"]),
            max_depth=rf["max_depth"],
            min_samples_leaf=int(rf["min_samples_leaf"]),
            features_per_split=rf["features_per_split"],
            bootstrap=bool(rf["bootstrap"]),
            seed=seed + SEED_FOREST,
        ))
    raise ConfigError(f"unknown geoml.algorithm {geoml['algorithm']!r}")


def cmd_fit(cfg: dict, args) -> int:
    ds = open_stage_input(cfg)
    data = build_dataset(ds, _load_points(cfg))
    model = _fit_model(cfg, data)
    model.save(args.out)
    echo_config(cfg, args.out)
    print(f"wrote {args.out} ({len(data.labels)} classes, {data.n} points)")
    return EXIT_OK


def cmd_predict(cfg: dict, args) -> int:
    ds = open_stage_input(cfg)
    doc = json.loads(Path(args.model).read_text())
    kind = doc.get("type")
    if kind == "knn":
        predict_knn(KnnModel.from_json_dict(doc), ds, args.out,
                    cfg["output"]["compression"])
    elif kind == "random-forest":
        predict_rf(RandomForestModel.from_json_dict(doc), ds, args.out,
                   cfg["output"]["compression"])
    elif kind == "kmeans":
        predict_kmeans(ds, KMeansModel.from_json_dict(doc), args.out,
                       cfg["output"]["compression"])
    elif kind == "pca":
        transform_raster_pca(ds, PCAModel.from_json_dict(doc), args.out,
                             cfg["output"]["compression"])
    else:
        raise InputError(f"unknown model type {kind!r} in {args.model}")
    echo_config(cfg, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_validate(cfg: dict, args) -> int:
    ds = open_stage_input(cfg)
    data = build_dataset(ds, _load_points(cfg))
    seed = int(cfg["seed"])
    geoml = cfg["geoml"]
    if geoml["algorithm"] == "knn":
        spec = {"algorithm": "knn", **geoml["knn"]}
    else:
        spec = {"algorithm": "random-forest", **geoml["random_forest"],
                "seed": seed + SEED_FOREST}
    report = cross_validate(data, geoml["scheme"], spec,
                            k=int(geoml["kfold_k"]), seed=seed + SEED_CV)
    report.save(args.out)
    echo_config(cfg, args.out)
    print(f"scheme {report.scheme}: accuracy "
          f"{report.accuracy_mean:.4f} +/- {report.accuracy_std:.4f}, "
          f"macro-F1 {report.macro_f1_mean:.4f} +/- {report.macro_f1_std:.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_serve(cfg: dict, args) -> int:
    import uvicorn

    from .service import SessionState, create_app

    session = SessionState.from_config(cfg, workspace=Path(args.workspace))
    ui_dir = args.ui
    if ui_dir is not None and not (ui_dir / "index.html").exists():
        raise InputError(f"no index.html under --ui directory {ui_dir}")
    app = create_app(session, ui_dir=ui_dir)
    print(f"serving on http://{args.host}:{args.port}"
          + (" (web UI at /)" if ui_dir else ""))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geodeep",
        description="Deep feature extraction and analysis for rasters "
                    "(CPU-only, resumable).")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config (defaults used when omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if out_required:
            p.add_argument("--out", type=Path, required=True,
                           help="output path")

    p = sub.add_parser("features", help="extract deep features to a GeoTIFF")
    common(p)
    p.add_argument("--resume", action="store_true",
                   help="continue from an existing checkpoint directory")
    p.add_argument("--dry-run", action="store_true",
                   help="print the tile plan and output geometry, then exit")
    p.add_argument("--quantize", action="store_true",
                   help="quantize weights to uint8 before inference")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--pause-ms", type=int, default=None, dest="pause_ms")
    p.add_argument("--max-batches", type=int, default=None, dest="max_batches",
                   help="stop (resumably) after N new batches")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("reduce", help="PCA raster transform or t-SNE embedding")
    common(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("cluster", help="k-means clustering of a feature raster")
    common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("similarity",
                       help="cosine similarity map from template points")
    common(p)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("fit", help="fit a classifier on labeled points")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply a fitted model to a raster")
    common(p)
    p.add_argument("--model", type=Path, required=True,
                   help="model JSON written by fit or cluster")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("validate", help="cross-validate a classifier")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="serve the HTTP API for the web UI")
    common(p, out_required=False)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8651)
    p.add_argument("--workspace", type=Path, default=Path("."),
                   help="directory for files produced by the service")
    p.add_argument("--ui", type=Path, default=None,
                   help="directory with the built web UI (index.html) to "
                        "serve at /")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        return args.func(cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, FileNotFoundError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ResumableRunError as e:
        print(f"resumable failure: {e}", file=sys.stderr)
        return EXIT_RESUMABLE
    except OSError as e:
        kind = EXIT_RESUMABLE if e.errno == errno.ENOSPC else EXIT_INPUT
        print(f"i/o error: {e}", file=sys.stderr)
        return kind
    except GeodeepError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
