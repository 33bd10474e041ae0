"""Cosine-similarity maps from template points, and threshold segmentation.

Scores honor the documented [0, 1] range: negative cosine is clamped to 0.
The template for several points is the mean of their L2-normalized feature
vectors, re-normalized; "max" aggregation (score = best match over the
individual point vectors) is available as an option.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InputError
from ..raster import (
    PointCollection,
    RasterDataset,
    iter_row_blocks,
    open_raster,
    read_window,
    write_raster,
)

MASK_NODATA = 255  # uint8 sentinel in threshold masks

AGGREGATIONS = ("mean", "max")


@dataclass
class TemplateSet:
    """Unit template vector(s) extracted from the feature raster."""

    points: list[tuple[float, float]]
    template: np.ndarray       # (d,), unit norm
    point_vectors: np.ndarray  # (m, d), unit rows
    aggregation: str = "mean"


def _cell_vector(ds: RasterDataset, x: float, y: float) -> np.ndarray:
    col, row = ds.pixel_for_point(x, y)
    block = read_window(ds, (col, row, 1, 1))
    v = block.data[:, 0, 0].astype(np.float64)
    if not np.all(np.isfinite(v)):
        raise InputError(f"point ({x}, {y}) falls on a nodata cell")
    return v


def extract_template(ds: RasterDataset, points, aggregation: str = "mean"
                     ) -> TemplateSet:
    """Build the template from one or more points on the feature raster."""
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {aggregation!r}")
    if isinstance(points, PointCollection):
        points.check_crs(ds.crs_id)
        coords = [(p.x, p.y) for p in points]
    else:
        coords = [(float(x), float(y)) for x, y in points]
    if not coords:
        raise InputError("template needs at least one point")

    unit_rows = []
    for x, y in coords:
        v = _cell_vector(ds, x, y)
        norm = float(np.linalg.norm(v))
        if norm == 0:
            raise InputError(f"point ({x}, {y}) has a zero feature vector")
        unit_rows.append(v / norm)
    vectors = np.asarray(unit_rows)
    mean = vectors.mean(axis=0)
    mean_norm = float(np.linalg.norm(mean))
    if mean_norm < 1e-12:
        raise InputError("template points cancel out (antipodal vectors)")
    return TemplateSet(points=coords, template=mean / mean_norm,
                       point_vectors=vectors, aggregation=aggregation)


def similarity_map(ds: RasterDataset, tset: TemplateSet, out_path: Path | str,
                   compression: str = "deflate") -> RasterDataset:
    """Score every cell against the template: max(0, cosine) in [0, 1].

    Zero-norm cells score 0; NaN cells stay NaN (nodata). With "max"
    aggregation each cell takes its best score over the individual point
    vectors.
    """
    if tset.template.shape[0] != ds.band_count:
        raise ValueError(
            f"template dimension {tset.template.shape[0]} != raster bands "
            f"{ds.band_count}"
        )
    refs = tset.point_vectors if tset.aggregation == "max" \
        else tset.template[None, :]
    out = np.empty((1, ds.height, ds.width), dtype=np.float32)
    row0 = 0
    for block in iter_row_blocks(ds):
        flat = block.data.reshape(ds.band_count, -1).T.astype(np.float64)
        norms = np.linalg.norm(flat, axis=1)
        valid = np.isfinite(flat).all(axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        cos = (flat @ refs.T) / safe[:, None]
        score = np.maximum(cos.max(axis=1), 0.0)
        score[norms == 0] = 0.0
        score[~valid] = np.nan
        out[0, row0:row0 + block.block_h, :] = \
            score.reshape(block.block_h, ds.width).astype(np.float32)
        row0 += block.block_h
    write_raster(out_path, out, ds.geotransform, ds.crs_id,
                 nodata=float("nan"), compression=compression)
    return open_raster(out_path)


def threshold_mask(sim: RasterDataset, threshold: float, out_path: Path | str,
                   compression: str = "deflate") -> RasterDataset:
    """Binary segmentation of a similarity raster: cell >= threshold -> 1."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    if sim.band_count != 1:
        raise ValueError("threshold_mask expects a single-band similarity raster")
    out = np.empty((1, sim.height, sim.width), dtype=np.uint8)
    row0 = 0
    for block in iter_row_blocks(sim):
        vals = block.data[0]
        mask = (vals >= threshold).astype(np.uint8)
        mask[~np.isfinite(vals)] = MASK_NODATA
        out[0, row0:row0 + block.block_h, :] = mask
        row0 += block.block_h
    write_raster(out_path, out, sim.geotransform, sim.crs_id,
                 nodata=float(MASK_NODATA), compression=compression)
    return open_raster(out_path)
