"""Raster rendering for the HTTP service: stretches, color ramp, PNG."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .raster import RasterDataset, read_window

# Fixed single-band color ramp (dark violet -> orange -> bright yellow),
# interpolated linearly between these anchors over normalized [0, 1].
RAMP_ANCHORS = [
    (0.00, (13, 8, 135)),
    (0.25, (126, 3, 168)),
    (0.50, (204, 71, 120)),
    (0.75, (248, 149, 64)),
    (1.00, (240, 249, 33)),
]


def percentile_stretch(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Map [lo, hi] to 0..255; a degenerate stretch renders mid-gray."""
    out = np.full(values.shape, 128.0)
    if hi > lo:
        out = (values - lo) / (hi - lo) * 255.0
    return np.clip(np.nan_to_num(out, nan=0.0), 0, 255).astype(np.uint8)


def band_percentiles(ds: RasterDataset, band: int,
                     lo: float = 2.0, hi: float = 98.0) -> tuple[float, float]:
    vals = read_window(ds, (0, 0, ds.width, ds.height), [band]).data
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        return 0.0, 0.0
    return float(np.percentile(finite, lo)), float(np.percentile(finite, hi))


def apply_ramp(norm: np.ndarray) -> np.ndarray:
    """Normalized [0, 1] values -> (h, w, 3) uint8 through the fixed ramp."""
    norm = np.clip(np.nan_to_num(norm, nan=0.0), 0.0, 1.0)
    stops = np.array([s for s, _ in RAMP_ANCHORS])
    colors = np.array([c for _, c in RAMP_ANCHORS], dtype=np.float64)
    out = np.empty(norm.shape + (3,), dtype=np.uint8)
    for ch in range(3):
        out[..., ch] = np.interp(norm, stops, colors[:, ch]).astype(np.uint8)
    return out


def render_composite(ds: RasterDataset, bands: list[int],
                     window: tuple[int, int, int, int],
                     stretches: list[tuple[float, float]]) -> bytes:
    """False-color RGB PNG of up to three bands (2-98 percentile stretch)."""
    block = read_window(ds, window, bands)
    channels = [percentile_stretch(block.data[i], *stretches[i])
                for i in range(len(bands))]
    while len(channels) < 3:
        channels.append(channels[-1])
    alpha = np.where(np.isfinite(block.data).all(axis=0), 255, 0) \
        .astype(np.uint8)
    rgba = np.dstack(channels[:3] + [alpha])
    return _png_bytes(rgba)


def render_ramp(ds: RasterDataset, window: tuple[int, int, int, int],
                vmin: float, vmax: float) -> bytes:
    """Single-band PNG through the fixed ramp over [vmin, vmax]."""
    block = read_window(ds, window, [0])
    vals = block.data[0].astype(np.float64)
    span = vmax - vmin
    norm = (vals - vmin) / span if span > 0 else np.full(vals.shape, 0.5)
    rgb = apply_ramp(norm)
    alpha = np.where(np.isfinite(vals), 255, 0).astype(np.uint8)
    return _png_bytes(np.dstack([rgb, alpha]))


def _png_bytes(rgba: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()
