"""End-to-end stage orchestration shared by the CLI and the HTTP service.

The feature stage composes: open raster -> resolve band strategy (with an
optional PCA-to-3-bands pre-transform) -> band statistics -> tile plan ->
build/adapt/quantize weights -> resumable batch inference -> mosaic ->
compressed GeoTIFF. Temporary checkpoint files are removed once the mosaic
has consumed them.
"""

from __future__ import annotations

import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import mosaic as mosaic_mod
from .analysis import fit_pca, sample_pixels, transform_raster_pca
from .config import SEED_SAMPLE, SEED_STATS
from .encoder import (
    InferenceOptions,
    InferenceRun,
    ModelWeights,
    ViTConfig,
    adapt_input_layer,
    build_reference_vit,
    cleanup_checkpoints,
    dequantize_weights,
    load_batch,
    load_external_model,
    quantize_weights,
    run_inference,
)
from .errors import ConfigError, InputError
from .raster import BandStats, RasterDataset, compute_band_stats, open_raster
from .tiler import TilePlan, plan_tiles


@dataclass
class FeaturesResult:
    out_path: Path | None
    dataset: RasterDataset | None
    plan: TilePlan
    out_w: int
    out_h: int
    feature_dim: int
    complete: bool
    n_batches: int


def _subset_stats(stats: BandStats, bands: tuple[int, ...]) -> BandStats:
    idx = list(bands)
    return BandStats(mean=stats.mean[idx], std=stats.std[idx],
                     minimum=stats.minimum[idx], maximum=stats.maximum[idx])


def _resolve_strategy(strategy: str, raster_bands: int,
                      model_bands: int) -> str:
    if strategy != "auto":
        return strategy
    if raster_bands == model_bands:
        return "none"
    if raster_bands > model_bands:
        return "replicate-mod3"
    return "average-mod"


def prepare_encoder(cfg: dict, ds: RasterDataset, work_dir: Path,
                    seed: int) -> tuple[ModelWeights, RasterDataset, str]:
    """Resolve the band strategy and produce ready-to-run weights.

    Returns (weights, effective dataset, strategy label). The "pca"
    strategy writes a 3-band intermediate raster under `work_dir` and runs
    the encoder on it; "select-bands" records the subset on the weights.
    """
    enc = cfg["encoder"]
    vit = enc["vit"]
    effective = ds

    strategy = enc["band_strategy"]
    if strategy == "pca":
        sample = sample_pixels(ds, cfg["analysis"]["sample_size"],
                               seed + SEED_SAMPLE)
        model = fit_pca(sample, k=3)
        work_dir.mkdir(parents=True, exist_ok=True)
        effective = transform_raster_pca(ds, model, work_dir / "input_pca3.tif")
        strategy = "none"

    if enc["model_path"]:
        weights = load_external_model(enc["model_path"])
    else:
        in_bands = effective.band_count if strategy == "none" else 3
        weights = build_reference_vit(ViTConfig(
            patch_size=int(vit["patch_size"]),
            embed_dim=int(vit["embed_dim"]),
            depth=int(vit["depth"]),
            heads=int(vit["heads"]),
            mlp_ratio=float(vit["mlp_ratio"]),
            in_bands=in_bands,
            sample_size=int(enc["sample_size"]),
        ))
    if weights.cfg.sample_size != int(enc["sample_size"]):
        raise ConfigError(
            f"model expects {weights.cfg.sample_size} px tiles but the "
            f"configured sample size is {enc['sample_size']}"
        )

    strategy = _resolve_strategy(strategy, effective.band_count,
                                 weights.cfg.in_bands)
    if strategy == "select-bands":
        bands = enc["select_bands"]
        if not bands:
            raise ConfigError("band_strategy select-bands needs select_bands")
        if any(not (0 <= int(b) < effective.band_count) for b in bands):
            raise InputError(f"select_bands {bands} outside raster bands")
        weights = adapt_input_layer(weights, weights.cfg.in_bands,
                                    "select-bands", bands=bands)
    elif strategy != "none":
        weights = adapt_input_layer(weights, effective.band_count, strategy)
    elif effective.band_count != weights.cfg.in_bands:
        raise ConfigError(
            f"band strategy 'none' needs a {weights.cfg.in_bands}-band "
            f"raster, got {effective.band_count} bands"
        )
    return weights, effective, strategy


def run_features(cfg: dict, out_path: Path | str, *, resume: bool = False,
                 dry_run: bool = False, max_batches: int | None = None,
                 progress: Callable[[int, int], None] | None = None
                 ) -> FeaturesResult:
    """Run the full feature-extraction stage (resumable)."""
    enc = cfg["encoder"]
    raster_path = cfg["input"]["raster"]
    if not raster_path:
        raise ConfigError("input.raster is required for the features stage")
    out_path = Path(out_path)
    ds = open_raster(raster_path)
    seed = int(cfg["seed"])

    ckpt_dir = Path(enc["checkpoint_dir"]) if enc["checkpoint_dir"] \
        else out_path.with_name(out_path.stem + "_checkpoints")
    if not resume and (ckpt_dir / "manifest.json").exists():
        shutil.rmtree(ckpt_dir)

    weights, effective, strategy = prepare_encoder(cfg, ds, ckpt_dir, seed)
    plan = plan_tiles(effective.width, effective.height,
                      int(enc["sample_size"]), int(enc["stride"]))
    patch = weights.cfg.patch_size
    out_w, out_h, _ = mosaic_mod.output_grid_geometry(
        effective.geotransform, effective.width, effective.height, patch)
    feature_dim = weights.cfg.embed_dim
    if dry_run:
        return FeaturesResult(out_path=None, dataset=None, plan=plan,
                              out_w=out_w, out_h=out_h,
                              feature_dim=feature_dim, complete=False,
                              n_batches=-(-plan.tile_count
                                          // int(enc["batch_size"])))

    quantized = bool(enc["quantize"])
    if quantized:
        weights = dequantize_weights(quantize_weights(weights))

    stats = compute_band_stats(effective, int(enc["stats_max_samples"]),
                               seed + SEED_STATS)
    if weights.band_selection:
        stats = _subset_stats(stats, weights.band_selection)

    options = InferenceOptions(
        checkpoint_dir=ckpt_dir,
        batch_size=int(enc["batch_size"]),
        pause_ms=int(enc["pause_ms"]),
        workers=int(enc["workers"]),
        band_strategy=strategy,
        quantized=quantized,
        max_batches=max_batches if max_batches is not None
        else enc["max_batches"],
        on_batch=progress,
    )
    run = run_inference(effective, plan, weights, stats, options)
    if not run.complete:
        return FeaturesResult(out_path=None, dataset=None, plan=plan,
                              out_w=out_w, out_h=out_h,
                              feature_dim=feature_dim, complete=False,
                              n_batches=run.manifest.n_batches)

    result_ds = mosaic_batches(run, effective, patch, feature_dim, out_path,
                               cfg["output"]["compression"])
    cleanup_checkpoints(run)
    pca_tmp = ckpt_dir / "input_pca3.tif"
    if pca_tmp.exists():
        pca_tmp.unlink()
        try:
            ckpt_dir.rmdir()
        except OSError:
            pass
    return FeaturesResult(out_path=out_path, dataset=result_ds, plan=plan,
                          out_w=out_w, out_h=out_h, feature_dim=feature_dim,
                          complete=True, n_batches=run.manifest.n_batches)


def mosaic_batches(run: InferenceRun, ds: RasterDataset, patch: int,
                   feature_dim: int, out_path: Path | str,
                   compression: str = "deflate") -> RasterDataset:
    """Blend all persisted batches into the output feature raster."""
    acc = mosaic_mod.new_accumulator(ds.geotransform, ds.width, ds.height,
                                     patch, feature_dim)
    for path in run.batch_paths:
        for grid in load_batch(path):
            acc.add_grid(grid)
    return mosaic_mod.finalize(acc, out_path, ds.crs_id, compression)


def open_stage_input(cfg: dict, prefer_features: bool = True) -> RasterDataset:
    """Raster for analysis/ML stages: input.features, else input.raster."""
    section = cfg["input"]
    path = section["features"] if prefer_features and section["features"] \
        else section["raster"]
    if not path:
        raise ConfigError("config needs input.features or input.raster")
    return open_raster(path)
