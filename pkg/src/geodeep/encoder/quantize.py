"""Affine uint8 weight quantization (simulated: dequantize-then-compute).

Per tensor: scale = (max - min) / 255 (1 for constant tensors),
zero_point = clamp(round(-min / scale), 0, 255),
q = clamp(round(v / scale) + zero_point, 0, 255),
with half-away-from-zero rounding. Dequantized values differ from the
originals by at most scale / 2 for values inside the fitted [min, max].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vit import ModelWeights, ViTConfig


@dataclass
class QuantizedTensor:
    data: np.ndarray  # uint8
    scale: float
    zero_point: int


@dataclass
class QuantizedModel:
    cfg: ViTConfig
    tensors: dict[str, QuantizedTensor]
    band_selection: tuple[int, ...] | None = None


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # np.round rounds half to even; the quantizer spec is half away from zero.
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_tensor(values: np.ndarray) -> QuantizedTensor:
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot quantize non-finite weights")
    vmin, vmax = float(v.min()), float(v.max())
    scale = (vmax - vmin) / 255.0 if vmax > vmin else 1.0
    zero_point = int(np.clip(_round_half_away(np.float64(-vmin / scale)), 0, 255))
    q = np.clip(_round_half_away(v / scale) + zero_point, 0, 255)
    return QuantizedTensor(data=q.astype(np.uint8), scale=scale,
                           zero_point=zero_point)


def dequantize(t: QuantizedTensor) -> np.ndarray:
    return ((t.data.astype(np.float64) - t.zero_point) * t.scale).astype(np.float32)


def quantize_weights(weights: ModelWeights) -> QuantizedModel:
    return QuantizedModel(
        cfg=weights.cfg,
        tensors={name: quantize_tensor(t) for name, t in weights.tensors.items()},
        band_selection=weights.band_selection,
    )


def dequantize_weights(model: QuantizedModel) -> ModelWeights:
    """Materialize float32 weights; inference then proceeds normally."""
    return ModelWeights(
        cfg=model.cfg,
        tensors={name: dequantize(t) for name, t in model.tensors.items()},
        band_selection=model.band_selection,
    )
