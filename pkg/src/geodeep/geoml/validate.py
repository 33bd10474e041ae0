"""Validation schemes and metrics for the supervised classifiers.

Schemes: random k-fold (shuffle with the given seed, fold sizes differing
by at most one, the first n mod k folds taking the extra row), groups from
a "fold" attribute column, or a single train/test evaluation from a "split"
column. Metrics per fold: confusion matrix, accuracy, and macro-F1 (classes
absent from a fold's test set are excluded from that fold's macro average).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InputError
from .dataset import TrainingData
from .forest import ForestParams, fit_random_forest
from .knn import fit_knn

SCHEMES = ("random-kfold", "column-fold", "column-split")


@dataclass
class FoldResult:
    name: str
    confusion: np.ndarray  # (L, L), rows = true, cols = predicted
    accuracy: float
    macro_f1: float
    test_indices: np.ndarray


@dataclass
class CVReport:
    scheme: str
    labels: list
    folds: list[FoldResult]
    accuracy_mean: float
    accuracy_std: float
    macro_f1_mean: float
    macro_f1_std: float

    def to_json_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "labels": self.labels,
            "folds": [{
                "name": f.name,
                "confusion": f.confusion.tolist(),
                "accuracy": f.accuracy,
                "macro_f1": f.macro_f1,
                "test_count": int(f.confusion.sum()),
            } for f in self.folds],
            "aggregate": {
                "accuracy": {"mean": self.accuracy_mean,
                             "std": self.accuracy_std},
                "macro_f1": {"mean": self.macro_f1_mean,
                             "std": self.macro_f1_std},
            },
        }

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1))


def random_kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Shuffled partition into k folds with sizes differing by at most 1."""
    if not (2 <= k <= n):
        raise ValueError(f"k={k} out of range [2, {n}]")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, k)
    folds = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(perm[pos:pos + size])
        pos += size
    return folds


def _metrics(y_true: np.ndarray, y_pred: np.ndarray,
             n_labels: int) -> tuple[np.ndarray, float, float]:
    confusion = np.zeros((n_labels, n_labels), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[t, p] += 1
    total = confusion.sum()
    accuracy = float(np.trace(confusion)) / total
    f1s = []
    for c in range(n_labels):
        support = confusion[c].sum()
        if support == 0:
            continue  # class absent from this fold's test set
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = support - tp
        f1s.append(2.0 * tp / (2.0 * tp + fp + fn))
    return confusion, accuracy, float(np.mean(f1s))


def _fit_predict(algorithm: dict, data: TrainingData, train: np.ndarray,
                 test: np.ndarray) -> np.ndarray:
    kind = algorithm.get("algorithm")
    x_train, y_train = data.x[train], data.y[train]
    if kind == "knn":
        model = fit_knn(x_train, y_train, data.labels,
                        k=int(algorithm.get("k", 5)),
                        metric=algorithm.get("metric", "euclidean"))
    elif kind == "random-forest":
        params = ForestParams(
            n_trees=int(algorithm.get("n_trees", 100)),
            max_depth=algorithm.get("max_depth"),
            min_samples_leaf=int(algorithm.get("min_samples_leaf", 1)),
            features_per_split=algorithm.get("features_per_split"),
            bootstrap=bool(algorithm.get("bootstrap", True)),
            seed=int(algorithm.get("seed", 0)),
        )
        model = fit_random_forest(x_train, y_train, data.labels, params)
    else:
        raise ValueError(f"unknown algorithm {kind!r}")
    return model.predict(data.x[test])


def _named_folds(data: TrainingData, scheme: str, k: int,
                 seed: int) -> list[tuple[str, np.ndarray, np.ndarray]]:
    n = data.n
    everything = np.arange(n)
    if scheme == "random-kfold":
        folds = random_kfold_indices(n, k, seed)
        return [(f"fold-{i}", np.setdiff1d(everything, test), test)
                for i, test in enumerate(folds)]
    if scheme == "column-fold":
        if any(v is None for v in data.folds):
            raise InputError('column-fold scheme requires a "fold" property '
                             "on every point")
        values = sorted(set(data.folds))
        return [(f"fold-{v}",
                 np.flatnonzero([f != v for f in data.folds]),
                 np.flatnonzero([f == v for f in data.folds]))
                for v in values]
    if scheme == "column-split":
        if any(v is None for v in data.splits):
            raise InputError('column-split scheme requires a "split" property '
                             "on every point")
        bad = sorted({v for v in data.splits if v not in ("train", "test")})
        if bad:
            raise InputError(f'split values must be "train" or "test", '
                             f"got {bad}")
        train = np.flatnonzero([s == "train" for s in data.splits])
        test = np.flatnonzero([s == "test" for s in data.splits])
        return [("split", train, test)]
    raise ValueError(f"unknown scheme {scheme!r}")


def cross_validate(data: TrainingData, scheme: str, algorithm: dict,
                   k: int = 5, seed: int = 0) -> CVReport:
    """Evaluate a classifier under the chosen validation scheme."""
    results = []
    for name, train, test in _named_folds(data, scheme, k, seed):
        if len(test) == 0:
            raise InputError(f"degenerate fold {name}: empty test set")
        if len(train) == 0 or len(np.unique(data.y[train])) < 2:
            raise InputError(
                f"degenerate fold {name}: training set needs at least one "
                "sample of at least 2 classes"
            )
        pred = _fit_predict(algorithm, data, train, test)
        confusion, acc, f1 = _metrics(data.y[test], pred, len(data.labels))
        results.append(FoldResult(name=name, confusion=confusion,
                                  accuracy=acc, macro_f1=f1,
                                  test_indices=test))
    accs = np.array([r.accuracy for r in results])
    f1s = np.array([r.macro_f1 for r in results])
    return CVReport(scheme=scheme, labels=data.labels, folds=results,
                    accuracy_mean=float(accs.mean()),
                    accuracy_std=float(accs.std()),
                    macro_f1_mean=float(f1s.mean()),
                    macro_f1_std=float(f1s.std()))
