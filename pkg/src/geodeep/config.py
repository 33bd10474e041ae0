"""Run configuration: strict JSON parsing, defaults, and derived seeds.

Every operation parameter has a key; omitted keys take the defaults below.
Unknown keys are rejected so typos fail loudly instead of silently running
with defaults. A copy of the effective configuration is echoed beside every
output file for provenance.

All randomness flows from the single top-level seed; stages derive their
own generator seeds by the fixed offsets below.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigError

# Seed offsets per consuming stage (seed + offset).
SEED_STATS = 1      # band statistics sampling
SEED_SAMPLE = 2     # pixel sampling for fits
SEED_TSNE = 3       # kept for symmetry; t-SNE init is deterministic
SEED_KMEANS = 4
SEED_FOREST = 5
SEED_CV = 6         # random k-fold shuffling

DEFAULTS: dict = {
    "seed": 0,
    "input": {
        "raster": None,    # source raster (features subcommand)
        "features": None,  # feature raster (analysis / ML subcommands)
        "points": None,    # GeoJSON points (similarity / fit / validate)
    },
    "encoder": {
        "sample_size": 64,
        "stride": 32,
        "batch_size": 16,
        "vit": {
            "patch_size": 8,
            "embed_dim": 16,
            "depth": 2,
            "heads": 2,
            "mlp_ratio": 2.0,
        },
        "band_strategy": "auto",  # auto|none|replicate-mod3|average-mod|select-bands|pca
        "select_bands": None,
        "model_path": None,       # external model archive (adapter boundary)
        "quantize": False,
        "pause_ms": 0,
        "checkpoint_dir": None,   # default: <out>_checkpoints
        "workers": 1,
        "max_batches": None,
        "stats_max_samples": 100_000,
    },
    "mosaic": {},
    "analysis": {
        "method": "pca",  # pca | tsne
        "components": 3,
        "sample_size": 100_000,
        "tsne": {"dims": 2, "perplexity": 30.0, "iterations": 1000},
        "kmeans": {"k": 5, "max_iter": 300, "tol": 1e-6},
    },
    "geoml": {
        "algorithm": "knn",  # knn | random-forest
        "knn": {"k": 5, "metric": "euclidean"},
        "random_forest": {
            "n_trees": 100,
            "max_depth": None,
            "min_samples_leaf": 1,
            "features_per_split": None,  # default floor(sqrt(d))
            "bootstrap": True,
        },
        "scheme": "random-kfold",  # random-kfold | column-fold | column-split
        "kfold_k": 5,
        "similarity": {"aggregation": "mean", "threshold": None},
    },
    "output": {"compression": "deflate"},
}


def _merge_strict(defaults: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here} must be an object")
            out[key] = _merge_strict(defaults[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Path | str | None) -> dict:
    """Parse and validate a config file; None yields pure defaults."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        user = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {path}: {e}") from e
    if not isinstance(user, dict):
        raise ConfigError(f"config root must be a JSON object: {path}")
    return _merge_strict(DEFAULTS, user)


def echo_config(cfg: dict, out_path: Path | str) -> Path:
    """Write the effective config beside an output file for provenance."""
    echo = Path(str(out_path) + ".config.json")
    echo.write_text(json.dumps(cfg, indent=1, sort_keys=True))
    return echo
