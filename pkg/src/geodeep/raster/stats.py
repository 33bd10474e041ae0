"""Per-band statistics from a seeded pixel sample (encoder input conditioning)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from .dataset import RasterDataset, iter_row_blocks


@dataclass(frozen=True)
class BandStats:
    """Population statistics per band: mean, std, min, max (NaN excluded)."""

    mean: np.ndarray
    std: np.ndarray
    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def band_count(self) -> int:
        return len(self.mean)


def compute_band_stats(ds: RasterDataset, max_samples: int = 100_000,
                       seed: int = 0) -> BandStats:
    """Estimate per-band statistics from a uniform seeded pixel sample.

    Uses every pixel when the raster has at most `max_samples` of them,
    otherwise a uniform sample without replacement. Statistics are
    population (divide by n). NaN (nodata) pixels are excluded per band.
    Deterministic for a fixed seed.
    """
    if max_samples < 2:
        raise ValueError("max_samples must be at least 2")
    total = ds.width * ds.height
    if total <= max_samples:
        flat_idx = np.arange(total, dtype=np.int64)
    else:
        rng = np.random.default_rng(seed)
        flat_idx = np.sort(rng.choice(total, size=max_samples, replace=False))

    samples = np.empty((ds.band_count, len(flat_idx)), dtype=np.float32)
    row0 = 0
    taken = 0
    for block in iter_row_blocks(ds):
        lo, hi = row0 * ds.width, (row0 + block.block_h) * ds.width
        in_block = flat_idx[(flat_idx >= lo) & (flat_idx < hi)] - lo
        if len(in_block):
            flat = block.data.reshape(ds.band_count, -1)
            samples[:, taken:taken + len(in_block)] = flat[:, in_block]
            taken += len(in_block)
        row0 += block.block_h
    assert taken == len(flat_idx)

    mean = np.empty(ds.band_count)
    std = np.empty(ds.band_count)
    vmin = np.empty(ds.band_count)
    vmax = np.empty(ds.band_count)
    for b in range(ds.band_count):
        vals = samples[b][np.isfinite(samples[b])]
        if len(vals) == 0:
            raise InputError(f"band {b} entirely nodata")
        v64 = vals.astype(np.float64)
        mean[b] = v64.mean()
        std[b] = v64.std()  # population
        vmin[b] = v64.min()
        vmax[b] = v64.max()
    return BandStats(mean=mean, std=std, minimum=vmin, maximum=vmax)
