"""Brute-force k-nearest-neighbors classification over feature rasters."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..raster import RasterDataset, iter_row_blocks, open_raster, write_raster

CLASS_NODATA = -1  # int16 sentinel in class rasters

METRICS = ("euclidean", "cosine")


@dataclass
class KnnModel:
    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,) codes
    labels: list
    k: int
    metric: str

    def to_json_dict(self) -> dict:
        return {"type": "knn", "k": self.k, "metric": self.metric,
                "labels": self.labels, "x": self.x.tolist(),
                "y": self.y.tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "KnnModel":
        return cls(x=np.asarray(d["x"], np.float64),
                   y=np.asarray(d["y"], np.int64),
                   labels=d["labels"], k=d["k"], metric=d["metric"])

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load(cls, path: Path | str) -> "KnnModel":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def predict(self, queries: np.ndarray) -> np.ndarray:
        return predict_codes(self, queries)


def fit_knn(x: np.ndarray, y: np.ndarray, labels: list, k: int,
            metric: str = "euclidean") -> KnnModel:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if not (1 <= k <= len(y)):
        raise ValueError(f"k={k} out of range [1, {len(y)}]")
    return KnnModel(x=x, y=y, labels=list(labels), k=k, metric=metric)


def _distances(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    if model.metric == "euclidean":
        diff = queries[:, None, :] - model.x[None, :, :]
        return np.sqrt(np.einsum("qnd,qnd->qn", diff, diff))
    # cosine distance = 1 - cosine similarity; zero-norm vectors score 0.
    qn = np.linalg.norm(queries, axis=1)
    tn = np.linalg.norm(model.x, axis=1)
    denom = np.where(qn > 0, qn, 1.0)[:, None] * np.where(tn > 0, tn, 1.0)[None, :]
    cos = (queries @ model.x.T) / denom
    cos[qn == 0, :] = 0.0
    cos[:, tn == 0] = 0.0
    return 1.0 - cos


def predict_codes(model: KnnModel, queries: np.ndarray) -> np.ndarray:
    """Majority vote among the k nearest training rows.

    Neighbors are ordered by (distance, training index). Vote ties are
    broken toward the class whose nearest tied-class neighbor is closest,
    then toward the lowest label code.
    """
    queries = np.asarray(queries, dtype=np.float64)
    dists = _distances(model, queries)
    out = np.empty(len(queries), dtype=np.int64)
    n_classes = len(model.labels)
    for qi in range(len(queries)):
        order = np.argsort(dists[qi], kind="stable")[:model.k]
        votes = np.bincount(model.y[order], minlength=n_classes)
        top = votes.max()
        tied = np.flatnonzero(votes == top)
        if len(tied) == 1:
            out[qi] = tied[0]
            continue
        best = None
        for code in tied:
            first = next(i for i in order if model.y[i] == code)
            key = (dists[qi][first], int(code))
            if best is None or key < best[0]:
                best = (key, int(code))
        out[qi] = best[1]
    return out


def write_label_sidecar(out_path: Path | str, labels: list) -> Path:
    """JSON sidecar mapping integer codes to label values."""
    sidecar = Path(str(out_path) + ".labels.json")
    sidecar.write_text(json.dumps({"labels": labels, "nodata": CLASS_NODATA}))
    return sidecar


def predict_class_raster(predict_fn, labels: list, ds: RasterDataset,
                         out_path: Path | str,
                         compression: str = "deflate") -> RasterDataset:
    """Stream any code-predictor over a raster into an int16 class band."""
    out = np.empty((1, ds.height, ds.width), dtype=np.int16)
    row0 = 0
    for block in iter_row_blocks(ds):
        flat = block.data.reshape(ds.band_count, -1).T.astype(np.float64)
        valid = np.isfinite(flat).all(axis=1)
        codes = np.full(flat.shape[0], CLASS_NODATA, dtype=np.int16)
        if valid.any():
            codes[valid] = predict_fn(flat[valid]).astype(np.int16)
        out[0, row0:row0 + block.block_h, :] = codes.reshape(block.block_h,
                                                             ds.width)
        row0 += block.block_h
    write_raster(out_path, out, ds.geotransform, ds.crs_id,
                 nodata=float(CLASS_NODATA), compression=compression)
    write_label_sidecar(out_path, labels)
    return open_raster(out_path)


def predict_knn(model: KnnModel, ds: RasterDataset, out_path: Path | str,
                compression: str = "deflate") -> RasterDataset:
    """Classify every raster cell; NaN cells become nodata."""
    if model.x.shape[1] != ds.band_count:
        raise ValueError(
            f"model expects {model.x.shape[1]} bands, raster has {ds.band_count}"
        )
    return predict_class_raster(lambda q: predict_codes(model, q),
                                model.labels, ds, out_path, compression)
