"""Reference patch-transformer encoder with analytic deterministic weights.

The model is a standard pre-norm vision transformer operating on square
tiles: patch embedding plus learned positional embeddings, `depth` blocks of
multi-head self-attention and MLP with residual connections, and a final
layer norm. There is no class token; every token is spatial and the output
is the per-patch feature grid.

Weights are not trained. Flattening every tensor row-major in the fixed
declaration order below into one global sequence, element j (0-based) is
assigned 0.02 * sin(j + 1). This makes runs reproducible everywhere without
standardizing an RNG.

Declaration order (it defines the analytic initialization):
  patch_embed.weight (D, in_bands, p, p), patch_embed.bias (D,),
  pos_embed ((S/p)^2, D), then per block i:
    norm1.scale, norm1.shift,
    attn.query.weight, attn.query.bias, attn.key.weight, attn.key.bias,
    attn.value.weight, attn.value.bias, attn.out.weight, attn.out.bias,
    norm2.scale, norm2.shift,
    mlp.fc1.weight (hidden, D), mlp.fc1.bias, mlp.fc2.weight (D, hidden),
    mlp.fc2.bias,
  and finally norm.scale, norm.shift. Linear layers apply x @ W.T + b.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import erf

from ..errors import InputError
from ..raster import PixelBlock

LAYER_NORM_EPS = 1e-6
INIT_AMPLITUDE = 0.02

BAND_STRATEGIES = ("replicate-mod3", "average-mod", "select-bands", "none")


@dataclass(frozen=True)
class ViTConfig:
    patch_size: int
    embed_dim: int
    depth: int
    heads: int
    mlp_ratio: float
    in_bands: int
    sample_size: int

    def __post_init__(self):
        if self.patch_size < 1 or self.sample_size % self.patch_size != 0:
            raise ValueError("sample_size must be a positive multiple of patch_size")
        if self.heads < 1 or self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.in_bands < 1:
            raise ValueError("in_bands must be >= 1")
        if self.mlp_ratio <= 0:
            raise ValueError("mlp_ratio must be positive")

    @property
    def grid_size(self) -> int:
        return self.sample_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid_size ** 2

    @property
    def hidden_dim(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "embed_dim": self.embed_dim,
            "depth": self.depth,
            "heads": self.heads,
            "mlp_ratio": self.mlp_ratio,
            "in_bands": self.in_bands,
            "sample_size": self.sample_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViTConfig":
        return cls(**d)


def tensor_layout(cfg: ViTConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Tensor names and shapes in declaration order."""
    d, h = cfg.embed_dim, cfg.hidden_dim
    layout: list[tuple[str, tuple[int, ...]]] = [
        ("patch_embed.weight", (d, cfg.in_bands, cfg.patch_size, cfg.patch_size)),
        ("patch_embed.bias", (d,)),
        ("pos_embed", (cfg.n_patches, d)),
    ]
    for i in range(cfg.depth):
        b = f"blocks.{i}."
        layout += [
            (b + "norm1.scale", (d,)), (b + "norm1.shift", (d,)),
            (b + "attn.query.weight", (d, d)), (b + "attn.query.bias", (d,)),
            (b + "attn.key.weight", (d, d)), (b + "attn.key.bias", (d,)),
            (b + "attn.value.weight", (d, d)), (b + "attn.value.bias", (d,)),
            (b + "attn.out.weight", (d, d)), (b + "attn.out.bias", (d,)),
            (b + "norm2.scale", (d,)), (b + "norm2.shift", (d,)),
            (b + "mlp.fc1.weight", (h, d)), (b + "mlp.fc1.bias", (h,)),
            (b + "mlp.fc2.weight", (d, h)), (b + "mlp.fc2.bias", (d,)),
        ]
    layout += [("norm.scale", (d,)), ("norm.shift", (d,))]
    return layout


@dataclass
class ModelWeights:
    """Ordered named float32 tensors of the reference encoder.

    band_selection, when set, records the raster band subset chosen by the
    select-bands adaptation strategy; the tensors themselves are untouched.
    """

    cfg: ViTConfig
    tensors: dict[str, np.ndarray]
    band_selection: tuple[int, ...] | None = None

    @property
    def param_count(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())

    def fingerprint(self) -> str:
        """Content hash covering config, tensor order, shapes, and values."""
        h = hashlib.sha256()
        h.update(json.dumps(self.cfg.to_dict(), sort_keys=True).encode())
        h.update(repr(self.band_selection).encode())
        for name, t in self.tensors.items():
            h.update(name.encode())
            h.update(str(t.shape).encode())
            h.update(np.ascontiguousarray(t, dtype="<f4").tobytes())
        return h.hexdigest()


@dataclass
class PatchFeatureGrid:
    """Per-patch feature vectors for one tile: data is (gh, gw, D) float32."""

    col_off: int
    row_off: int
    data: np.ndarray

    @property
    def grid_h(self) -> int:
        return self.data.shape[0]

    @property
    def grid_w(self) -> int:
        return self.data.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.data.shape[2]


def build_reference_vit(cfg: ViTConfig) -> ModelWeights:
    """Build the analytically initialized reference encoder.

    Element j of the global row-major tensor sequence gets 0.02*sin(j+1);
    two calls with equal config produce identical weights.
    """
    layout = tensor_layout(cfg)
    total = sum(int(np.prod(shape)) for _, shape in layout)
    values = (INIT_AMPLITUDE * np.sin(np.arange(1, total + 1, dtype=np.float64)))
    tensors: dict[str, np.ndarray] = {}
    pos = 0
    for name, shape in layout:
        n = int(np.prod(shape))
        tensors[name] = values[pos:pos + n].astype(np.float32).reshape(shape)
        pos += n
    return ModelWeights(cfg=cfg, tensors=tensors)


def adapt_input_layer(weights: ModelWeights, target_bands: int,
                      strategy: str, bands: list[int] | None = None
                      ) -> ModelWeights:
    """Adapt the patch-embedding projection to a different band count.

    replicate-mod3 (target >= 3): new channel c copies original channel
    c mod 3. average-mod (target < 3): new channel c is the mean of original
    channels {j : j mod target == c}. select-bands: weights untouched, the
    3-band raster subset is recorded instead. Only the projection changes;
    the bias is shared. Weights are copied without rescaling.
    """
    if strategy not in BAND_STRATEGIES:
        raise ValueError(f"unknown band strategy {strategy!r}")
    cfg = weights.cfg
    if strategy == "none":
        if target_bands != cfg.in_bands:
            raise ValueError(
                f"strategy 'none' with {target_bands} bands but model "
                f"expects {cfg.in_bands}"
            )
        return weights
    if strategy == "select-bands":
        if bands is None or len(bands) != cfg.in_bands:
            raise ValueError(
                f"select-bands needs exactly {cfg.in_bands} band indices"
            )
        return replace(weights, band_selection=tuple(int(b) for b in bands))
    if cfg.in_bands != 3:
        raise ValueError(f"{strategy} requires a 3-band model, got {cfg.in_bands}")

    proj = weights.tensors["patch_embed.weight"]
    if strategy == "replicate-mod3":
        if target_bands < 3:
            raise ValueError("replicate-mod3 requires target bands >= 3")
        new_proj = np.stack([proj[:, c % 3] for c in range(target_bands)], axis=1)
    else:  # average-mod
        if not (1 <= target_bands < 3):
            raise ValueError("average-mod requires target bands < 3")
        groups = [[j for j in range(3) if j % target_bands == c]
                  for c in range(target_bands)]
        new_proj = np.stack([proj[:, g].mean(axis=1) for g in groups], axis=1)
    tensors = dict(weights.tensors)
    tensors["patch_embed.weight"] = new_proj.astype(np.float32)
    return ModelWeights(cfg=replace(cfg, in_bands=target_bands), tensors=tensors)


def _extract_patches(x: np.ndarray, p: int) -> np.ndarray:
    """(C, S, S) tile -> (N, C*p*p) patch matrix, patches row-major."""
    c, s, _ = x.shape
    g = s // p
    return (x.reshape(c, g, p, g, p)
             .transpose(1, 3, 0, 2, 4)
             .reshape(g * g, c * p * p))


def _layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + LAYER_NORM_EPS) * scale + shift


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _attention(x: np.ndarray, t: dict[str, np.ndarray], prefix: str,
               heads: int) -> np.ndarray:
    n, d = x.shape
    dh = d // heads
    q = x @ t[prefix + "query.weight"].T + t[prefix + "query.bias"]
    k = x @ t[prefix + "key.weight"].T + t[prefix + "key.bias"]
    v = x @ t[prefix + "value.weight"].T + t[prefix + "value.bias"]
    q = q.reshape(n, heads, dh).transpose(1, 0, 2)
    k = k.reshape(n, heads, dh).transpose(1, 0, 2)
    v = v.reshape(n, heads, dh).transpose(1, 0, 2)
    scores = _softmax(q @ k.transpose(0, 2, 1) / np.sqrt(dh))
    ctx = (scores @ v).transpose(1, 0, 2).reshape(n, d)
    return ctx @ t[prefix + "out.weight"].T + t[prefix + "out.bias"]


def patch_embeddings(weights: ModelWeights, tile: np.ndarray,
                     include_bias: bool = True) -> np.ndarray:
    """Patch-embedding tokens (N, D) of a (C, S, S) tile, before positions."""
    cfg = weights.cfg
    patches = _extract_patches(np.asarray(tile, dtype=np.float64), cfg.patch_size)
    w = weights.tensors["patch_embed.weight"].astype(np.float64)
    out = patches @ w.reshape(cfg.embed_dim, -1).T
    if include_bias:
        out = out + weights.tensors["patch_embed.bias"].astype(np.float64)
    return out


def encode_tile(weights: ModelWeights, tile: PixelBlock) -> PatchFeatureGrid:
    """Run the transformer forward pass on one normalized tile.

    The tile must be (in_bands, S, S). Output is the (S/p, S/p, D) patch
    feature grid; the pass is deterministic and rejects non-finite
    intermediate values.
    """
    cfg = weights.cfg
    s = cfg.sample_size
    if tile.data.shape != (cfg.in_bands, s, s):
        raise ValueError(
            f"tile shape {tile.data.shape} does not match model input "
            f"({cfg.in_bands}, {s}, {s})"
        )
    t = {k: v.astype(np.float64) for k, v in weights.tensors.items()}
    x = patch_embeddings(weights, tile.data) + t["pos_embed"]
    for i in range(cfg.depth):
        b = f"blocks.{i}."
        x = x + _attention(_layer_norm(x, t[b + "norm1.scale"],
                                       t[b + "norm1.shift"]),
                           t, b + "attn.", cfg.heads)
        h = _layer_norm(x, t[b + "norm2.scale"], t[b + "norm2.shift"])
        x = x + _gelu(h @ t[b + "mlp.fc1.weight"].T
                      + t[b + "mlp.fc1.bias"]) @ t[b + "mlp.fc2.weight"].T \
            + t[b + "mlp.fc2.bias"]
    x = _layer_norm(x, t["norm.scale"], t["norm.shift"])
    if not np.all(np.isfinite(x)):
        raise ValueError(
            f"non-finite encoder output for tile at "
            f"({tile.col_off}, {tile.row_off}); check input for nodata"
        )
    g = cfg.grid_size
    return PatchFeatureGrid(col_off=tile.col_off, row_off=tile.row_off,
                            data=x.reshape(g, g, cfg.embed_dim)
                                  .astype(np.float32))


def save_model(weights: ModelWeights, path) -> None:
    """Serialize weights to an .npz archive loadable by load_external_model."""
    meta = {
        "format": "geodeep-vit",
        "config": weights.cfg.to_dict(),
        "band_selection": list(weights.band_selection)
        if weights.band_selection else None,
        "order": list(weights.tensors.keys()),
    }
    arrays = {f"tensor/{k}": v for k, v in weights.tensors.items()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(),
                                          dtype=np.uint8), **arrays)


def load_external_model(path) -> ModelWeights:
    """Load a local model file through the adapter boundary.

    The only adapter compiled in is the self-serialized reference format
    (.npz written by save_model); anything else reports that no adapter is
    available. The returned weights satisfy the encode_tile contract.
    """
    from pathlib import Path

    path = Path(path)
    if not path.exists():
        raise InputError(f"model file not found: {path}")
    if path.suffix != ".npz":
        raise InputError(f"no adapter available for {path.suffix!r} model files")
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise InputError(f"no adapter available: unreadable archive: {e}") from e
    if "__meta__" not in archive:
        raise InputError("no adapter available for this archive layout")
    meta = json.loads(bytes(archive["__meta__"]).decode())
    if meta.get("format") != "geodeep-vit":
        raise InputError(f"no adapter available for format {meta.get('format')!r}")
    cfg = ViTConfig.from_dict(meta["config"])
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_layout(cfg):
        key = f"tensor/{name}"
        if key not in archive:
            raise InputError(f"model archive missing tensor {name}")
        t = archive[key]
        if tuple(t.shape) != shape:
            raise InputError(
                f"tensor {name} has shape {tuple(t.shape)}, expected {shape}"
            )
        tensors[name] = t.astype(np.float32)
    sel = meta.get("band_selection")
    return ModelWeights(cfg=cfg, tensors=tensors,
                        band_selection=tuple(sel) if sel else None)
