"""Tile encoders: reference transformer, band adaptation, quantization,
and the resumable batch executor."""

from .quantize import (
    QuantizedModel,
    QuantizedTensor,
    dequantize,
    dequantize_weights,
    quantize_tensor,
    quantize_weights,
)
from .runner import (
    CheckpointManifest,
    InferenceOptions,
    InferenceRun,
    batch_path,
    cleanup_checkpoints,
    load_batch,
    plan_fingerprint,
    run_inference,
    write_batch,
)
from .vit import (
    BAND_STRATEGIES,
    ModelWeights,
    PatchFeatureGrid,
    ViTConfig,
    adapt_input_layer,
    build_reference_vit,
    encode_tile,
    load_external_model,
    patch_embeddings,
    save_model,
    tensor_layout,
)

__all__ = [
    "BAND_STRATEGIES",
    "CheckpointManifest",
    "InferenceOptions",
    "InferenceRun",
    "ModelWeights",
    "PatchFeatureGrid",
    "QuantizedModel",
    "QuantizedTensor",
    "ViTConfig",
    "adapt_input_layer",
    "batch_path",
    "build_reference_vit",
    "cleanup_checkpoints",
    "dequantize",
    "dequantize_weights",
    "encode_tile",
    "load_batch",
    "load_external_model",
    "patch_embeddings",
    "plan_fingerprint",
    "quantize_tensor",
    "quantize_weights",
    "run_inference",
    "save_model",
    "tensor_layout",
    "write_batch",
]
