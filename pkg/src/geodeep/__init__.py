"""geodeep: CPU-only deep feature extraction and analysis for rasters."""

__version__ = "0.1.0"
