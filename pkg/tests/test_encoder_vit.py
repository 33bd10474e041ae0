"""Reference transformer: analytic init, band adaptation, forward pass."""

from __future__ import annotations

import math

import numpy as np
import pytest

from geodeep.errors import InputError
from geodeep.encoder import (
    ViTConfig,
    adapt_input_layer,
    build_reference_vit,
    encode_tile,
    load_external_model,
    patch_embeddings,
    save_model,
)
from geodeep.raster import PixelBlock

from oracles import build_reference_weights_scalar, scalar_vit_forward

CFG = ViTConfig(patch_size=8, embed_dim=16, depth=2, heads=2, mlp_ratio=2.0,
                in_bands=3, sample_size=64)

# Computed with the scalar oracle before the main build.
EXPECTED_PARAM_COUNT = 8592
ZERO_TILE_OUT_0_0 = [0.006071901710647382, -0.00697873239317693,
                     0.00974753277472969, -0.006503128535243177]
ZERO_TILE_OUT_63_12 = [-0.0012095460230223667, 0.0038405700909314687,
                       -0.0009975910081999502, 0.007815554731202691]


def _tile(data):
    return PixelBlock(0, 0, np.asarray(data, dtype=np.float32))


class TestBuildReferenceVit:
    def test_first_element_is_sin_1(self):
        w = build_reference_vit(CFG)
        first = next(iter(w.tensors.values())).ravel()[0]
        assert first == pytest.approx(0.02 * math.sin(1.0), abs=1e-12)

    def test_deterministic(self):
        a, b = build_reference_vit(CFG), build_reference_vit(CFG)
        assert a.fingerprint() == b.fingerprint()
        for name in a.tensors:
            np.testing.assert_array_equal(a.tensors[name], b.tensors[name])

    def test_param_count_matches_shape_accounting(self):
        # Independent accounting from the config arithmetic alone.
        d, hidden, n_patches = 16, 32, 64
        per_block = 2 * d + 4 * (d * d + d) + 2 * d \
            + (hidden * d + hidden) + (d * hidden + d)
        expected = (d * 3 * 8 * 8 + d) + n_patches * d \
            + CFG.depth * per_block + 2 * d
        assert expected == EXPECTED_PARAM_COUNT
        assert build_reference_vit(CFG).param_count == EXPECTED_PARAM_COUNT

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ViTConfig(patch_size=7, embed_dim=16, depth=2, heads=2,
                      mlp_ratio=2.0, in_bands=3, sample_size=64)
        with pytest.raises(ValueError):
            ViTConfig(patch_size=8, embed_dim=15, depth=2, heads=2,
                      mlp_ratio=2.0, in_bands=3, sample_size=64)


class TestAdaptInputLayer:
    def test_target_3_replicate_is_identity(self):
        w = build_reference_vit(CFG)
        out = adapt_input_layer(w, 3, "replicate-mod3")
        np.testing.assert_array_equal(out.tensors["patch_embed.weight"],
                                      w.tensors["patch_embed.weight"])
        assert out.cfg.in_bands == 3

    def test_replicate_to_6(self):
        w = build_reference_vit(CFG)
        out = adapt_input_layer(w, 6, "replicate-mod3")
        proj = out.tensors["patch_embed.weight"]
        orig = w.tensors["patch_embed.weight"]
        assert proj.shape == (16, 6, 8, 8)
        for c in range(6):
            np.testing.assert_array_equal(proj[:, c], orig[:, c % 3])
        np.testing.assert_array_equal(out.tensors["patch_embed.bias"],
                                      w.tensors["patch_embed.bias"])

    def test_average_to_1(self):
        w = build_reference_vit(CFG)
        out = adapt_input_layer(w, 1, "average-mod")
        orig = w.tensors["patch_embed.weight"]
        np.testing.assert_allclose(out.tensors["patch_embed.weight"][:, 0],
                                   (orig[:, 0] + orig[:, 1] + orig[:, 2]) / 3.0,
                                   atol=1e-7)

    def test_average_to_2_modulo_groups(self):
        w = build_reference_vit(CFG)
        out = adapt_input_layer(w, 2, "average-mod")
        orig = w.tensors["patch_embed.weight"]
        np.testing.assert_allclose(out.tensors["patch_embed.weight"][:, 0],
                                   (orig[:, 0] + orig[:, 2]) / 2.0, atol=1e-7)
        np.testing.assert_array_equal(out.tensors["patch_embed.weight"][:, 1],
                                      orig[:, 1])

    def test_select_bands_records_subset(self):
        w = build_reference_vit(CFG)
        out = adapt_input_layer(w, 3, "select-bands", bands=[4, 0, 2])
        assert out.band_selection == (4, 0, 2)
        np.testing.assert_array_equal(out.tensors["patch_embed.weight"],
                                      w.tensors["patch_embed.weight"])

    def test_strategy_band_count_mismatch(self):
        w = build_reference_vit(CFG)
        with pytest.raises(ValueError):
            adapt_input_layer(w, 2, "replicate-mod3")
        with pytest.raises(ValueError):
            adapt_input_layer(w, 6, "average-mod")
        with pytest.raises(ValueError):
            adapt_input_layer(w, 3, "select-bands", bands=[0, 1])
        with pytest.raises(ValueError):
            adapt_input_layer(w, 4, "none")

    def test_duplicate_band_linearity(self):
        # 6 duplicated bands through replicate-mod3 doubles the pre-bias
        # patch embedding exactly.
        w3 = build_reference_vit(CFG)
        w6 = adapt_input_layer(w3, 6, "replicate-mod3")
        rng = np.random.default_rng(5)
        tile3 = rng.normal(size=(3, 64, 64)).astype(np.float32)
        tile6 = np.concatenate([tile3, tile3], axis=0)
        e3 = patch_embeddings(w3, tile3, include_bias=False)
        e6 = patch_embeddings(w6, tile6, include_bias=False)
        np.testing.assert_allclose(e6, 2.0 * e3, rtol=1e-12, atol=1e-15)


class TestEncodeTile:
    def test_output_shape(self):
        w = build_reference_vit(CFG)
        grid = encode_tile(w, _tile(np.zeros((3, 64, 64))))
        assert grid.data.shape == (8, 8, 16)
        assert grid.data.dtype == np.float32

    def test_bit_identical_reruns(self):
        w = build_reference_vit(CFG)
        tile = _tile(np.random.default_rng(1).normal(size=(3, 64, 64)))
        a = encode_tile(w, tile)
        b = encode_tile(w, tile)
        assert a.data.tobytes() == b.data.tobytes()

    def test_zero_tile_matches_scalar_oracle(self):
        w = build_reference_vit(CFG)
        grid = encode_tile(w, _tile(np.zeros((3, 64, 64))))
        flat = grid.data.reshape(64, 16)
        np.testing.assert_allclose(flat[0, :4], ZERO_TILE_OUT_0_0, atol=1e-7)
        np.testing.assert_allclose(flat[63, 12:16], ZERO_TILE_OUT_63_12,
                                   atol=1e-7)
        # Full comparison against the oracle run live.
        oracle = scalar_vit_forward(build_reference_weights_scalar(CFG.to_dict()),
                                    CFG.to_dict(),
                                    np.zeros((3, 64, 64)).tolist())
        np.testing.assert_allclose(flat, np.asarray(oracle), atol=1e-7)

    def test_random_tile_matches_scalar_oracle(self):
        w = build_reference_vit(CFG)
        tile = np.random.default_rng(11).normal(size=(3, 64, 64)) \
            .astype(np.float32)
        grid = encode_tile(w, _tile(tile))
        oracle = scalar_vit_forward(build_reference_weights_scalar(CFG.to_dict()),
                                    CFG.to_dict(), tile.astype(np.float64).tolist())
        np.testing.assert_allclose(grid.data.reshape(64, 16),
                                   np.asarray(oracle), atol=1e-7)

    def test_positional_sensitivity(self):
        w = build_reference_vit(CFG)
        grid = encode_tile(w, _tile(np.full((3, 64, 64), 1.0)))
        flat = grid.data.reshape(64, 16)
        distinct = np.unique(flat, axis=0)
        assert len(distinct) >= 2

    def test_shape_mismatch(self):
        w = build_reference_vit(CFG)
        with pytest.raises(ValueError, match="does not match"):
            encode_tile(w, _tile(np.zeros((3, 32, 32))))

    def test_non_finite_input_rejected(self):
        w = build_reference_vit(CFG)
        bad = np.zeros((3, 64, 64), dtype=np.float32)
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            encode_tile(w, _tile(bad))


class TestExternalModelAdapter:
    def test_no_adapter_for_unknown_format(self, tmp_path):
        p = tmp_path / "weights.bin"
        p.write_bytes(b"\x00" * 16)
        with pytest.raises(InputError, match="no adapter available"):
            load_external_model(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_external_model(tmp_path / "absent.npz")

    def test_identity_adapter_round_trip(self, tmp_path):
        w = build_reference_vit(CFG)
        save_model(w, tmp_path / "ref.npz")
        loaded = load_external_model(tmp_path / "ref.npz")
        assert loaded.fingerprint() == w.fingerprint()
        tile = _tile(np.random.default_rng(2).normal(size=(3, 64, 64)))
        np.testing.assert_array_equal(encode_tile(loaded, tile).data,
                                      encode_tile(w, tile).data)

    def test_wide_adapter_reports_768_features(self, tmp_path):
        cfg = ViTConfig(patch_size=16, embed_dim=768, depth=1, heads=12,
                        mlp_ratio=2.0, in_bands=3, sample_size=16)
        save_model(build_reference_vit(cfg), tmp_path / "wide.npz")
        loaded = load_external_model(tmp_path / "wide.npz")
        grid = encode_tile(loaded, _tile(np.zeros((3, 16, 16))))
        assert grid.feature_dim == 768
