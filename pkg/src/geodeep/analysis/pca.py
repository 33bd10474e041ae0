"""Principal component analysis via covariance eigendecomposition.

Fits happen on an in-memory sample (the covariance is d x d); applying the
transform streams over the raster block-wise, so rasters larger than memory
still work. The population covariance convention (divide by n) is used
throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..raster import RasterDataset, iter_row_blocks, open_raster, write_raster
from .sampling import PixelSample


@dataclass
class PCAModel:
    mean: np.ndarray                # (d,)
    components: np.ndarray          # (k, d), rows orthonormal
    explained_variance: np.ndarray  # (k,), non-increasing

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def dim(self) -> int:
        return self.components.shape[1]

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) @ self.components + self.mean

    def to_json_dict(self) -> dict:
        return {
            "type": "pca",
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PCAModel":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   components=np.asarray(d["components"], dtype=np.float64),
                   explained_variance=np.asarray(d["explained_variance"],
                                                 dtype=np.float64))

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load(cls, path: Path | str) -> "PCAModel":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def fit_pca(sample: PixelSample | np.ndarray, k: int) -> PCAModel:
    """Eigendecompose the population covariance of the sample.

    Components are sorted by descending eigenvalue; exact ties are ordered
    by the first index of each component's largest-magnitude entry. Signs
    are fixed so that entry is positive. Deterministic.
    """
    x = sample.values if isinstance(sample, PixelSample) else np.asarray(sample)
    x = x.astype(np.float64)
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least 2 samples to fit")
    if not (1 <= k <= min(n - 1, d)):
        raise ValueError(f"k={k} out of range [1, {min(n - 1, d)}]")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite values in sample")

    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / n
    evals, evecs = np.linalg.eigh(cov)

    keys = [(-evals[i], int(np.argmax(np.abs(evecs[:, i])))) for i in range(d)]
    order = sorted(range(d), key=lambda i: keys[i])
    comps = evecs.T[order][:k].copy()
    for row in comps:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1
    return PCAModel(mean=mean, components=comps,
                    explained_variance=np.maximum(evals[order][:k], 0.0))


def transform_raster_pca(ds: RasterDataset, model: PCAModel,
                         out_path: Path | str,
                         compression: str = "deflate") -> RasterDataset:
    """Project every cell onto the components; NaN cells stay NaN."""
    if model.dim != ds.band_count:
        raise ValueError(
            f"model expects {model.dim} bands, raster has {ds.band_count}"
        )
    out = np.empty((model.k, ds.height, ds.width), dtype=np.float32)
    row0 = 0
    for block in iter_row_blocks(ds):
        flat = block.data.reshape(ds.band_count, -1).T.astype(np.float64)
        proj = (flat - model.mean) @ model.components.T
        proj[~np.isfinite(flat).all(axis=1)] = np.nan
        h = block.block_h
        out[:, row0:row0 + h, :] = proj.T.reshape(model.k, h, ds.width)
        row0 += h
    write_raster(out_path, out, ds.geotransform, ds.crs_id,
                 nodata=float("nan"), compression=compression)
    return open_raster(out_path)
