"""Design matrices from labeled reference points on a feature raster."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..raster import PointCollection, RasterDataset, read_window

logger = logging.getLogger(__name__)


@dataclass
class TrainingData:
    """Feature rows and labels extracted from points, file order preserved."""

    x: np.ndarray        # (n, d) float64
    y: np.ndarray        # (n,) int codes
    labels: list         # code -> original label value
    folds: list          # per-row "fold" property (None when absent)
    splits: list         # per-row "split" property (None when absent)
    cells: list[tuple[int, int]]

    @property
    def n(self) -> int:
        return len(self.y)


def build_dataset(ds: RasterDataset, points: PointCollection) -> TrainingData:
    """Extract one feature row per labeled point.

    Label values (string or integer) are mapped to dense codes in
    first-appearance order. Points sharing a feature cell are kept as
    duplicate rows, with a warning. Every point must carry a "label"
    property, sit inside the extent, and hit a valid cell.
    """
    points.check_crs(ds.crs_id)
    rows, codes, cells, folds, splits = [], [], [], [], []
    vocab: dict = {}
    labels: list = []
    seen_cells: dict[tuple[int, int], int] = {}
    for i, pt in enumerate(points):
        if "label" not in pt.properties or pt.properties["label"] is None:
            raise InputError(f"point {i} at ({pt.x}, {pt.y}) has no label property")
        label = pt.properties["label"]
        col, row = ds.pixel_for_point(pt.x, pt.y)
        block = read_window(ds, (col, row, 1, 1))
        v = block.data[:, 0, 0].astype(np.float64)
        if not np.all(np.isfinite(v)):
            raise InputError(f"point {i} at ({pt.x}, {pt.y}) falls on nodata")
        cell = (col, row)
        if cell in seen_cells:
            logger.warning(
                "points %d and %d share feature cell %s; both rows kept",
                seen_cells[cell], i, cell)
        else:
            seen_cells[cell] = i
        if label not in vocab:
            vocab[label] = len(vocab)
            labels.append(label)
        rows.append(v)
        codes.append(vocab[label])
        cells.append(cell)
        folds.append(pt.properties.get("fold"))
        splits.append(pt.properties.get("split"))
    if not rows:
        raise InputError("no labeled points provided")
    return TrainingData(x=np.asarray(rows), y=np.asarray(codes, dtype=np.int64),
                        labels=labels, folds=folds, splits=splits, cells=cells)
