"""K-means clustering with k-means++ seeding and Lloyd iterations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..raster import RasterDataset, iter_row_blocks, open_raster, write_raster
from .sampling import PixelSample

CLUSTER_NODATA = -1  # int16 sentinel in cluster rasters


@dataclass
class KMeansModel:
    k: int
    centroids: np.ndarray  # (k, d)
    inertia: float
    seed: int
    n_iter: int = 0
    inertia_history: list[float] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {"type": "kmeans", "k": self.k,
                "centroids": self.centroids.tolist(),
                "inertia": self.inertia, "seed": self.seed}

    @classmethod
    def from_json_dict(cls, d: dict) -> "KMeansModel":
        return cls(k=d["k"], centroids=np.asarray(d["centroids"], np.float64),
                   inertia=d["inertia"], seed=d["seed"])

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load(cls, path: Path | str) -> "KMeansModel":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    closest = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:  # all remaining points coincide with chosen centroids
            idx = rng.integers(n)
        centroids[j] = x[idx]
        closest = np.minimum(closest, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def fit_kmeans(sample: PixelSample | np.ndarray, k: int, seed: int = 0,
               max_iter: int = 300, tol: float = 1e-6) -> KMeansModel:
    """Fit k-means with k-means++ seeding and Lloyd iterations.

    Assignment ties go to the lowest centroid index; clusters that empty out
    are re-seeded to the point farthest from its nearest centroid. Iterates
    until the largest centroid shift drops below `tol` or `max_iter` is hit,
    then recomputes the final fixed-point assignment. The recorded inertia
    history is checked to be non-increasing at every step.
    """
    x = sample.values if isinstance(sample, PixelSample) else np.asarray(sample)
    x = x.astype(np.float64)
    n = x.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k={k} out of range [1, {n}]")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(x, k, rng)
    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _sq_dists(x, centroids)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assign].sum())
        assert not history or inertia <= history[-1] + 1e-9, \
            "inertia increased across Lloyd iterations"
        history.append(inertia)

        new_centroids = centroids.copy()
        nearest_d2 = d2[np.arange(n), assign]
        used_reseeds: set[int] = set()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centroids[j] = x[members].mean(axis=0)
            else:
                order = np.argsort(-nearest_d2, kind="stable")
                far = next(int(i) for i in order if int(i) not in used_reseeds)
                used_reseeds.add(far)
                new_centroids[j] = x[far]
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            break

    d2 = _sq_dists(x, centroids)
    assign = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    history.append(inertia)
    return KMeansModel(k=k, centroids=centroids, inertia=inertia, seed=seed,
                       n_iter=n_iter, inertia_history=history)


def predict_kmeans(ds: RasterDataset, model: KMeansModel,
                   out_path: Path | str,
                   compression: str = "deflate") -> RasterDataset:
    """Assign every cell to its nearest centroid (single int16 band).

    Ties go to the lowest centroid index; NaN cells become nodata (-1).
    """
    if model.centroids.shape[1] != ds.band_count:
        raise ValueError(
            f"model expects {model.centroids.shape[1]} bands, raster has "
            f"{ds.band_count}"
        )
    out = np.empty((1, ds.height, ds.width), dtype=np.int16)
    row0 = 0
    for block in iter_row_blocks(ds):
        flat = block.data.reshape(ds.band_count, -1).T.astype(np.float64)
        valid = np.isfinite(flat).all(axis=1)
        codes = np.full(flat.shape[0], CLUSTER_NODATA, dtype=np.int16)
        if valid.any():
            codes[valid] = _sq_dists(flat[valid], model.centroids) \
                .argmin(axis=1).astype(np.int16)
        out[0, row0:row0 + block.block_h, :] = codes.reshape(block.block_h,
                                                             ds.width)
        row0 += block.block_h
    write_raster(out_path, out, ds.geotransform, ds.crs_id,
                 nodata=float(CLUSTER_NODATA), compression=compression)
    return open_raster(out_path)
