"""Georeferenced raster and point I/O."""

from .dataset import (
    GeoTransform,
    PixelBlock,
    RasterDataset,
    iter_row_blocks,
    open_raster,
    read_window,
    write_raster,
)
from .points import PointCollection, PointFeature, read_points
from .stats import BandStats, compute_band_stats

__all__ = [
    "BandStats",
    "GeoTransform",
    "PixelBlock",
    "PointCollection",
    "PointFeature",
    "RasterDataset",
    "compute_band_stats",
    "iter_row_blocks",
    "open_raster",
    "read_points",
    "read_window",
    "write_raster",
]
