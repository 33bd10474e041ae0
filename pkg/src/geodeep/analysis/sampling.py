"""Seeded uniform sampling of valid cells from a raster."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..raster import RasterDataset, iter_row_blocks


@dataclass
class PixelSample:
    """Feature vectors drawn without replacement from non-nodata cells."""

    values: np.ndarray        # (n, d) float64
    cell_indices: np.ndarray  # (n,) flat indices: row * width + col
    seed: int

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def sample_pixels(ds: RasterDataset, n: int, seed: int = 0) -> PixelSample:
    """Draw up to n cells uniformly without replacement, deterministically.

    A cell is valid when every band is finite. Rasters with at most n valid
    cells contribute all of them. Two passes over the raster keep memory
    bounded by the sample, not the raster.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    valid_chunks = []
    row0 = 0
    for block in iter_row_blocks(ds):
        ok = np.isfinite(block.data).all(axis=0).reshape(-1)
        valid_chunks.append(np.flatnonzero(ok) + row0 * ds.width)
        row0 += block.block_h
    valid = np.concatenate(valid_chunks) if valid_chunks else np.empty(0, np.int64)
    if len(valid) == 0:
        raise InputError("raster has no valid (non-nodata) cells")

    rng = np.random.default_rng(seed)
    take = min(n, len(valid))
    chosen = valid[rng.choice(len(valid), size=take, replace=False)]

    order = np.argsort(chosen, kind="stable")
    sorted_cells = chosen[order]
    gathered = np.empty((take, ds.band_count), dtype=np.float64)
    row0 = 0
    for block in iter_row_blocks(ds):
        lo, hi = row0 * ds.width, (row0 + block.block_h) * ds.width
        sel = np.flatnonzero((sorted_cells >= lo) & (sorted_cells < hi))
        if len(sel):
            flat = block.data.reshape(ds.band_count, -1)
            gathered[sel] = flat[:, sorted_cells[sel] - lo].T
        row0 += block.block_h
    # Undo the gather ordering so rows follow the RNG draw order.
    values = np.empty_like(gathered)
    values[order] = gathered
    return PixelSample(values=values, cell_indices=chosen, seed=seed)
