"""Dimensionality reduction and unsupervised clustering over feature rasters."""

from .kmeans import CLUSTER_NODATA, KMeansModel, fit_kmeans, predict_kmeans
from .pca import PCAModel, fit_pca, transform_raster_pca
from .sampling import PixelSample, sample_pixels
from .tsne import TsneResult, tsne_embed

__all__ = [
    "CLUSTER_NODATA",
    "KMeansModel",
    "PCAModel",
    "PixelSample",
    "TsneResult",
    "fit_kmeans",
    "fit_pca",
    "predict_kmeans",
    "sample_pixels",
    "transform_raster_pca",
    "tsne_embed",
]
