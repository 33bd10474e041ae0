"""Raster datasets, geotransform arithmetic, and windowed pixel access.

All pixel access goes through float32 with nodata mapped to NaN, so every
downstream stage sees a single missing-value sentinel. The geotransform maps
pixel top-left corners to CRS coordinates; point-to-pixel lookups floor to
the containing pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InputError
from . import geotiff


@dataclass(frozen=True)
class GeoTransform:
    """Affine pixel-to-CRS mapping without rotation.

    pixel_width is positive; pixel_height is negative for north-up rasters.
    Rotation terms must be zero (rotated rasters are rejected at open time).
    """

    origin_x: float
    origin_y: float
    pixel_width: float
    pixel_height: float
    row_rotation: float = 0.0
    col_rotation: float = 0.0

    def __post_init__(self):
        if self.pixel_width == 0 or self.pixel_height == 0:
            raise ValueError("pixel sizes must be non-zero")
        if self.row_rotation != 0.0 or self.col_rotation != 0.0:
            raise InputError("rotated raster unsupported")

    def geo_of_pixel(self, col: float, row: float) -> tuple[float, float]:
        """CRS coordinates of the top-left corner of pixel (col, row)."""
        return (self.origin_x + col * self.pixel_width,
                self.origin_y + row * self.pixel_height)

    def pixel_of_geo(self, x: float, y: float) -> tuple[int, int]:
        """Integer pixel containing the point (floor of the affine inverse)."""
        col = math.floor((x - self.origin_x) / self.pixel_width)
        row = math.floor((y - self.origin_y) / self.pixel_height)
        return col, row

    def scaled(self, factor: int) -> "GeoTransform":
        """Same origin, pixel sizes multiplied by `factor` (mosaic geometry)."""
        return GeoTransform(self.origin_x, self.origin_y,
                            self.pixel_width * factor,
                            self.pixel_height * factor)


@dataclass
class PixelBlock:
    """A float32 pixel window, band-major: data has shape (bands, h, w)."""

    col_off: int
    row_off: int
    data: np.ndarray

    @property
    def band_count(self) -> int:
        return self.data.shape[0]

    @property
    def block_h(self) -> int:
        return self.data.shape[1]

    @property
    def block_w(self) -> int:
        return self.data.shape[2]


@dataclass
class RasterDataset:
    """Metadata handle for an on-disk GeoTIFF; pixels are read on demand.

    Reads are stateless (each one opens the file), so a dataset may be
    shared freely across worker threads.
    """

    path: Path
    width: int
    height: int
    band_count: int
    sample_type: str
    geotransform: GeoTransform
    crs_id: str
    nodata: float | None
    _info: geotiff.TiffInfo = field(repr=False)

    def read_window(self, window: tuple[int, int, int, int],
                    bands: list[int] | None = None) -> PixelBlock:
        return read_window(self, window, bands)

    def read_all(self, bands: list[int] | None = None) -> PixelBlock:
        return read_window(self, (0, 0, self.width, self.height), bands)

    def pixel_for_point(self, x: float, y: float) -> tuple[int, int]:
        """Containing pixel of a CRS point; errors if outside the extent."""
        col, row = self.geotransform.pixel_of_geo(x, y)
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise InputError(f"point ({x}, {y}) outside raster extent")
        return col, row


def open_raster(path: Path | str) -> RasterDataset:
    """Open a GeoTIFF and return its metadata without loading pixel data.

    Raises InputError for missing files, unsupported sample types, and
    rotated geotransforms.
    """
    info = geotiff.read_info(path)
    if info.transform is not None:
        m = info.transform
        gt = GeoTransform(origin_x=m[3], origin_y=m[7],
                          pixel_width=m[0], pixel_height=m[5])
    else:
        sx, sy = info.pixel_scale
        tp = info.tiepoint
        # Tiepoint (i, j, k, x, y, z): raster (i, j) pins to CRS (x, y).
        origin_x = tp[3] - tp[0] * sx
        origin_y = tp[4] + tp[1] * sy
        gt = GeoTransform(origin_x=origin_x, origin_y=origin_y,
                          pixel_width=sx, pixel_height=-sy)
    return RasterDataset(
        path=Path(path),
        width=info.width,
        height=info.height,
        band_count=info.samples,
        sample_type=info.sample_type,
        geotransform=gt,
        crs_id=geotiff.decode_crs(info.geo_keys),
        nodata=info.nodata,
        _info=info,
    )


def read_window(ds: RasterDataset, window: tuple[int, int, int, int],
                bands: list[int] | None = None) -> PixelBlock:
    """Read a pixel window as float32 with nodata mapped to NaN.

    `window` is (col_off, row_off, width, height); `bands` is an ordered
    list of 0-based band indices (default: all bands in order).
    """
    col_off, row_off, w, h = window
    if bands is None:
        bands = list(range(ds.band_count))
    out = np.empty((len(bands), h, w), dtype=np.float32)
    for i, b in enumerate(bands):
        raw = geotiff.read_band_window(ds._info, b, col_off, row_off, w, h)
        band = raw.astype(np.float32)
        if ds.nodata is not None and not math.isnan(ds.nodata):
            band[raw == np.asarray(ds.nodata, dtype=raw.dtype)] = np.nan
        out[i] = band
    return PixelBlock(col_off=col_off, row_off=row_off, data=out)


def write_raster(path: Path | str, data: np.ndarray, gt: GeoTransform,
                 crs_id: str = "", *, nodata: float | None = None,
                 compression: str = "deflate", tile_size: int = 256) -> Path:
    """Write a (bands, height, width) array as a tiled GeoTIFF.

    float64 input is narrowed to float32; other dtypes are written as-is
    (uint8/uint16/int16/float32). DEFLATE compression by default. The output
    round-trips losslessly through open_raster/read_window.
    """
    data = np.asarray(data)
    if data.dtype == np.float64:
        data = data.astype(np.float32)
    return geotiff.write_geotiff(
        path, data,
        pixel_scale=(gt.pixel_width, -gt.pixel_height),
        tiepoint=(0.0, 0.0, 0.0, gt.origin_x, gt.origin_y, 0.0),
        crs_id=crs_id,
        nodata=nodata,
        compression=compression,
        tile_size=tile_size,
    )


def iter_row_blocks(ds: RasterDataset, rows_per_block: int = 256):
    """Yield full-width PixelBlocks covering the raster top to bottom."""
    for r0 in range(0, ds.height, rows_per_block):
        h = min(rows_per_block, ds.height - r0)
        yield read_window(ds, (0, r0, ds.width, h))
