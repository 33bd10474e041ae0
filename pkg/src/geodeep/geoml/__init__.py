"""Similarity mapping and supervised classification over feature rasters."""

from .dataset import TrainingData, build_dataset
from .forest import (
    ForestParams,
    RandomForestModel,
    fit_random_forest,
    predict_rf,
)
from .knn import CLASS_NODATA, KnnModel, fit_knn, predict_knn
from .similarity import (
    AGGREGATIONS,
    MASK_NODATA,
    TemplateSet,
    extract_template,
    similarity_map,
    threshold_mask,
)
from .validate import CVReport, FoldResult, cross_validate, random_kfold_indices

__all__ = [
    "AGGREGATIONS",
    "CLASS_NODATA",
    "CVReport",
    "FoldResult",
    "ForestParams",
    "KnnModel",
    "MASK_NODATA",
    "RandomForestModel",
    "TemplateSet",
    "TrainingData",
    "build_dataset",
    "cross_validate",
    "extract_template",
    "fit_knn",
    "fit_random_forest",
    "predict_knn",
    "predict_rf",
    "random_kfold_indices",
    "similarity_map",
    "threshold_mask",
]
