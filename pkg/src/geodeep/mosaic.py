"""Merge per-tile patch feature grids into one feature raster.

The output grid is anchored to the input origin with cells p input pixels
wide, independent of tile positions: cell (i, j) covers input pixels
[i*p, (i+1)*p) x [j*p, (j+1)*p). Each patch lands in the cell containing
its center, floor((offset + local*p + p/2) / p), which keeps flush tiles
(offsets not multiples of p) on the global grid. Overlaps are blended by
the unweighted mean, accumulated in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import PatchFeatureGrid
from .raster import GeoTransform, RasterDataset, open_raster, write_raster


def output_grid_geometry(gt: GeoTransform, raster_w: int, raster_h: int,
                         patch: int) -> tuple[int, int, GeoTransform]:
    """Feature-raster geometry: ceil(dim / p) cells, pixel sizes scaled by p."""
    if patch < 1:
        raise ValueError("patch size must be >= 1")
    out_w = -(-raster_w // patch)
    out_h = -(-raster_h // patch)
    return out_w, out_h, gt.scaled(patch)


def _cell_indices(offset: int, count: int, patch: int) -> np.ndarray:
    # floor((offset + k*p + p/2) / p), in exact integer arithmetic
    starts = 2 * (offset + np.arange(count, dtype=np.int64) * patch) + patch
    return starts // (2 * patch)


@dataclass
class FeatureAccumulator:
    """Sum and count grids for mean-blended mosaicking."""

    out_w: int
    out_h: int
    feature_dim: int
    patch: int
    out_gt: GeoTransform

    def __post_init__(self):
        self.sums = np.zeros((self.out_h, self.out_w, self.feature_dim),
                             dtype=np.float64)
        self.counts = np.zeros((self.out_h, self.out_w), dtype=np.int64)

    def add_grid(self, grid: PatchFeatureGrid) -> None:
        cols = _cell_indices(grid.col_off, grid.grid_w, self.patch)
        rows = _cell_indices(grid.row_off, grid.grid_h, self.patch)
        assert cols[0] >= 0 and cols[-1] < self.out_w, "cell outside output grid"
        assert rows[0] >= 0 and rows[-1] < self.out_h, "cell outside output grid"
        rr, cc = np.ix_(rows, cols)
        # Patch centers map to distinct cells (stride of p), so plain
        # indexed addition is safe within one grid.
        self.sums[rr, cc] += grid.data.astype(np.float64)
        self.counts[rr, cc] += 1

    def merge(self, other: "FeatureAccumulator") -> None:
        """Fold in a partition's partial sums; result is partition-independent."""
        self.sums += other.sums
        self.counts += other.counts

    def finalize_array(self) -> np.ndarray:
        """(D, out_h, out_w) float32 means; cells never covered become NaN."""
        if self.counts.sum() == 0:
            raise ValueError("empty accumulator: nothing was accumulated")
        safe = np.maximum(self.counts, 1)[:, :, None]
        mean = (self.sums / safe).astype(np.float32)
        mean[self.counts == 0] = np.nan
        return np.moveaxis(mean, 2, 0)


def accumulate(acc: FeatureAccumulator, grid: PatchFeatureGrid) -> None:
    acc.add_grid(grid)


def new_accumulator(gt: GeoTransform, raster_w: int, raster_h: int,
                    patch: int, feature_dim: int) -> FeatureAccumulator:
    out_w, out_h, out_gt = output_grid_geometry(gt, raster_w, raster_h, patch)
    return FeatureAccumulator(out_w=out_w, out_h=out_h,
                              feature_dim=feature_dim, patch=patch,
                              out_gt=out_gt)


def finalize(acc: FeatureAccumulator, path: Path | str, crs_id: str = "",
             compression: str = "deflate") -> RasterDataset:
    """Write the blended feature raster (float32, NaN nodata) and open it."""
    data = acc.finalize_array()
    write_raster(path, data, acc.out_gt, crs_id,
                 nodata=float("nan"), compression=compression)
    return open_raster(path)
