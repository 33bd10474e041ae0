"""Sliding-window tile planning and tile normalization.

Tiles are square, all the same size: the final window per axis is flushed
to the raster edge instead of padding a partial tile, so the union of tiles
covers every pixel. Overlap is expressed solely through stride < sample
size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import BandStats, PixelBlock


@dataclass(frozen=True)
class TilePlan:
    """Deterministic row-major list of tile offsets for one raster."""

    sample_size: int
    stride: int
    raster_w: int
    raster_h: int
    offsets: tuple[tuple[int, int], ...]

    @property
    def tile_count(self) -> int:
        return len(self.offsets)


def axis_offsets(dim: int, sample_size: int, stride: int) -> list[int]:
    """Offsets along one axis: 0, stride, 2*stride, ... clipped to
    dim - sample_size, plus a final flush offset at dim - sample_size."""
    last = dim - sample_size
    offs = list(range(0, last + 1, stride))
    if offs[-1] != last:
        offs.append(last)
    return offs


def plan_tiles(raster_w: int, raster_h: int, sample_size: int,
               stride: int) -> TilePlan:
    """Plan the sliding-window decomposition of a raster into square tiles.

    Requires sample_size <= min(raster_w, raster_h) and
    1 <= stride <= sample_size (a larger stride would leave gaps).
    """
    if sample_size < 1:
        raise ValueError("sample size must be positive")
    if sample_size > min(raster_w, raster_h):
        raise ValueError(
            f"sample size {sample_size} exceeds raster "
            f"{raster_w}x{raster_h}"
        )
    if not (1 <= stride <= sample_size):
        raise ValueError(
            f"stride must be in [1, sample_size]; got {stride} for "
            f"sample size {sample_size}"
        )
    cols = axis_offsets(raster_w, sample_size, stride)
    rows = axis_offsets(raster_h, sample_size, stride)
    offsets = tuple((c, r) for r in rows for c in cols)
    return TilePlan(sample_size=sample_size, stride=stride,
                    raster_w=raster_w, raster_h=raster_h, offsets=offsets)


def normalize_block(block: PixelBlock, stats: BandStats) -> PixelBlock:
    """Standardize a tile per band: (value - mean) / std.

    Bands with zero std map to 0 (no division error); NaN propagates.
    """
    if stats.band_count != block.band_count:
        raise ValueError(
            f"stats cover {stats.band_count} bands, block has {block.band_count}"
        )
    mean = stats.mean.astype(np.float32)[:, None, None]
    std = stats.std.astype(np.float32)[:, None, None]
    safe = np.where(std > 0, std, 1.0).astype(np.float32)
    out = (block.data - mean) / safe
    # 0 * data keeps NaN where the input was NaN.
    out = np.where(std > 0, out, block.data * np.float32(0.0))
    return PixelBlock(col_off=block.col_off, row_off=block.row_off,
                      data=out.astype(np.float32))
