"""Random forest of CART trees grown on bootstrap samples.

Splits minimize Gini impurity over candidate thresholds placed at midpoints
between consecutive sorted unique feature values. Ties between candidate
splits go to the lowest feature index, then the lowest threshold. Each
split draws a seeded random feature subset (floor(sqrt(d)) by default); if
none of the drawn features admits a valid split, more features are drawn
until one does or all are exhausted, so a fully grown tree memorizes
distinct rows. Per-tree seeds derive from the forest seed plus the tree
index, which makes training deterministic and tree-parallelizable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..raster import RasterDataset
from .knn import predict_class_raster


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # default floor(sqrt(d))
    bootstrap: bool = True
    seed: int = 0


@dataclass
class RandomForestModel:
    trees: list[dict]
    labels: list
    params: ForestParams
    n_features: int

    def to_json_dict(self) -> dict:
        return {"type": "random-forest", "labels": self.labels,
                "n_features": self.n_features,
                "params": {
                    "n_trees": self.params.n_trees,
                    "max_depth": self.params.max_depth,
                    "min_samples_leaf": self.params.min_samples_leaf,
                    "features_per_split": self.params.features_per_split,
                    "bootstrap": self.params.bootstrap,
                    "seed": self.params.seed,
                },
                "trees": self.trees}

    @classmethod
    def from_json_dict(cls, d: dict) -> "RandomForestModel":
        return cls(trees=d["trees"], labels=d["labels"],
                   params=ForestParams(**d["params"]),
                   n_features=d["n_features"])

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load(cls, path: Path | str) -> "RandomForestModel":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

    def predict(self, queries: np.ndarray) -> np.ndarray:
        return predict_codes(self, queries)


def _gini(counts: np.ndarray, total: int) -> float:
    p = counts / total
    return 1.0 - float((p * p).sum())


def _majority(y: np.ndarray, n_classes: int) -> int:
    return int(np.bincount(y, minlength=n_classes).argmax())


def _best_split(x: np.ndarray, y: np.ndarray, feats: np.ndarray,
                n_classes: int, min_leaf: int):
    """Best (feature, threshold, decrease) among `feats`, or None."""
    n = len(y)
    parent = _gini(np.bincount(y, minlength=n_classes), n)
    best = None
    for f in feats:
        vals = x[:, f]
        uniq = np.unique(vals)
        if len(uniq) < 2:
            continue
        order = np.argsort(vals, kind="stable")
        y_sorted = y[order]
        v_sorted = vals[order]
        left_counts = np.zeros(n_classes, dtype=np.int64)
        total_counts = np.bincount(y, minlength=n_classes)
        i = 0
        for u_idx in range(len(uniq) - 1):
            # advance past all rows equal to uniq[u_idx]
            while i < n and v_sorted[i] == uniq[u_idx]:
                left_counts[y_sorted[i]] += 1
                i += 1
            n_left = i
            n_right = n - i
            if n_left < min_leaf or n_right < min_leaf:
                continue
            threshold = (uniq[u_idx] + uniq[u_idx + 1]) / 2.0
            g = (n_left * _gini(left_counts, n_left)
                 + n_right * _gini(total_counts - left_counts, n_right)) / n
            decrease = parent - g
            key = (-decrease, int(f), float(threshold))
            if best is None or key < best[0]:
                best = (key, int(f), float(threshold), decrease)
    if best is None:
        return None
    return best[1], best[2], best[3]


def _grow_tree(x: np.ndarray, y: np.ndarray, n_classes: int,
               params: ForestParams, rng: np.random.Generator,
               depth: int = 0) -> dict:
    if len(np.unique(y)) == 1:
        return {"c": int(y[0])}
    if params.max_depth is not None and depth >= params.max_depth:
        return {"c": _majority(y, n_classes)}
    d = x.shape[1]
    m = params.features_per_split or max(1, int(math.floor(math.sqrt(d))))
    m = min(m, d)
    perm = rng.permutation(d)
    split = None
    inspected = m
    while split is None and inspected <= d:
        feats = np.sort(perm[:inspected])
        split = _best_split(x, y, feats, n_classes, params.min_samples_leaf)
        inspected += 1
    if split is None:
        return {"c": _majority(y, n_classes)}
    f, threshold, _ = split
    mask = x[:, f] <= threshold
    return {
        "f": f,
        "t": threshold,
        "l": _grow_tree(x[mask], y[mask], n_classes, params, rng, depth + 1),
        "r": _grow_tree(x[~mask], y[~mask], n_classes, params, rng, depth + 1),
    }


def fit_random_forest(x: np.ndarray, y: np.ndarray, labels: list,
                      params: ForestParams = ForestParams()
                      ) -> RandomForestModel:
    """Train the forest; deterministic for a fixed seed."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n < 2:
        raise ValueError("need at least 2 training samples")
    if len(np.unique(y)) < 2:
        raise ValueError("training data has a single class")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n_classes = len(labels)
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(params.seed + t)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        trees.append(_grow_tree(x[idx], y[idx], n_classes, params, rng))
    return RandomForestModel(trees=trees, labels=list(labels), params=params,
                             n_features=x.shape[1])


def _tree_predict(tree: dict, row: np.ndarray) -> int:
    node = tree
    while "c" not in node:
        node = node["l"] if row[node["f"]] <= node["t"] else node["r"]
    return node["c"]


def predict_codes(model: RandomForestModel, queries: np.ndarray) -> np.ndarray:
    """Majority vote across trees, ties to the lowest label code."""
    queries = np.asarray(queries, dtype=np.float64)
    n_classes = len(model.labels)
    votes = np.zeros((len(queries), n_classes), dtype=np.int64)
    for tree in model.trees:
        for qi in range(len(queries)):
            votes[qi, _tree_predict(tree, queries[qi])] += 1
    return votes.argmax(axis=1)


def predict_rf(model: RandomForestModel, ds: RasterDataset,
               out_path: Path | str,
               compression: str = "deflate") -> RasterDataset:
    """Classify every raster cell; NaN cells become nodata."""
    if model.n_features != ds.band_count:
        raise ValueError(
            f"model expects {model.n_features} bands, raster has "
            f"{ds.band_count}"
        )
    return predict_class_raster(lambda q: predict_codes(model, q),
                                model.labels, ds, out_path, compression)
