"""Shared fixtures: synthetic rasters and point files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from geodeep.raster import GeoTransform, open_raster, write_raster

UTM_GT = GeoTransform(origin_x=500_000.0, origin_y=4_200_000.0,
                      pixel_width=10.0, pixel_height=-10.0)
CRS = "EPSG:32633"


def write_test_raster(path, data, gt=UTM_GT, crs=CRS, nodata=None,
                      compression="deflate"):
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[None, :, :]
    write_raster(path, data, gt, crs, nodata=nodata, compression=compression)
    return open_raster(path)


def gradient_band(h, w, scale=10.0):
    """Band value 10*row + col: the classic window-read fixture."""
    rows = np.arange(h, dtype=np.float32)[:, None] * scale
    cols = np.arange(w, dtype=np.float32)[None, :]
    return rows + cols


def write_points_file(path, entries, crs=None):
    """entries: iterable of (x, y, properties) or (x, y)."""
    features = []
    for e in entries:
        x, y = e[0], e[1]
        props = e[2] if len(e) > 2 else {}
        features.append({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [x, y]},
            "properties": props,
        })
    doc = {"type": "FeatureCollection", "features": features}
    if crs:
        doc["crs"] = {"type": "name", "properties": {"name": crs}}
    Path(path).write_text(json.dumps(doc))
    return Path(path)


def texture_bank(period):
    """Four independent patch-stationary binary patterns of one period."""
    p = period
    return [
        lambda x, y: 2.0 * (((x // p) + (y // p)) % 2) - 1.0,  # checker
        lambda x, y: 2.0 * ((x // p) % 2) - 1.0,               # v stripes
        lambda x, y: 2.0 * ((y // p) % 2) - 1.0,               # h stripes
        lambda x, y: 2.0 * (((x // p) * (y // p)) % 2) - 1.0,  # product grid
    ]


def two_texture_raster(path, size=256, periods=(2, 4), noise=0.1, seed=1):
    """Synthetic 4-band raster: texture A left half, texture B right half.

    Returns (dataset, planted cell labels at 8 px patch resolution). The
    half boundary sits on a patch edge, so every patch is pure.
    """
    rng = np.random.default_rng(seed)
    xs = np.broadcast_to(np.arange(size)[None, :], (size, size))
    ys = np.broadcast_to(np.arange(size)[:, None], (size, size))
    left = xs < size // 2
    banks = texture_bank(periods[0]), texture_bank(periods[1])
    data = np.empty((4, size, size), dtype=np.float32)
    for b in range(4):
        img = np.where(left, banks[0][b](xs, ys), banks[1][b](xs, ys))
        data[b] = (img + rng.normal(0, noise, size=(size, size)))
    ds = write_test_raster(path, data)
    cells = size // 8
    planted = np.zeros((cells, cells), dtype=int)
    planted[:, cells // 2:] = 1
    return ds, planted


@pytest.fixture
def gradient_raster(tmp_path):
    data = np.stack([gradient_band(12, 12),
                     gradient_band(12, 12) + 100.0,
                     np.full((12, 12), 7.0, dtype=np.float32)])
    return write_test_raster(tmp_path / "gradient.tif", data)


@pytest.fixture
def feature_raster_8x8(tmp_path):
    """Small deterministic multi-band float raster standing in for features."""
    rng = np.random.default_rng(42)
    data = rng.normal(size=(6, 8, 8)).astype(np.float32)
    return write_test_raster(tmp_path / "features.tif", data)
