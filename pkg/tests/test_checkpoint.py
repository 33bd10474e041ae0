"""Resumable batch inference: manifests, commit order, resume determinism."""

from __future__ import annotations

import errno
import time

import numpy as np
import pytest

from geodeep.encoder import runner as runner_mod
from geodeep.encoder import (
    InferenceOptions,
    ViTConfig,
    build_reference_vit,
    load_batch,
    run_inference,
    write_batch,
)
from geodeep.encoder.runner import MANIFEST_NAME, CheckpointManifest, batch_path
from geodeep.errors import FingerprintMismatch, ResumableRunError
from geodeep.raster import compute_band_stats
from geodeep.tiler import plan_tiles

from conftest import write_test_raster

CFG = ViTConfig(patch_size=8, embed_dim=16, depth=1, heads=2, mlp_ratio=2.0,
                in_bands=3, sample_size=64)


@pytest.fixture
def small_run(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.uniform(0, 255, size=(3, 100, 100)).astype(np.float32)
    ds = write_test_raster(tmp_path / "in.tif", data)
    plan = plan_tiles(100, 100, 64, 32)
    weights = build_reference_vit(CFG)
    stats = compute_band_stats(ds, max_samples=100_000, seed=1)
    return ds, plan, weights, stats, tmp_path


def _options(ckpt, **kw):
    return InferenceOptions(checkpoint_dir=ckpt, batch_size=4, **kw)


def _batch_bytes(ckpt, manifest):
    return {i: batch_path(ckpt, i).read_bytes()
            for i in sorted(manifest.completed)}


class TestRunInference:
    def test_batch_arithmetic(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        run = run_inference(ds, plan, weights, stats, _options(tmp / "ck"))
        assert run.complete
        assert run.manifest.completed == {0, 1, 2}
        sizes = [len(load_batch(p)) for p in run.batch_paths]
        assert sizes == [4, 4, 1]

    def test_batch_round_trip(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        run = run_inference(ds, plan, weights, stats, _options(tmp / "ck"))
        grids = load_batch(run.batch_paths[0])
        assert [(g.col_off, g.row_off) for g in grids] == list(plan.offsets[:4])
        assert grids[0].data.shape == (8, 8, 16)

    def test_stop_and_resume_identical(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        full = run_inference(ds, plan, weights, stats, _options(tmp / "full"))
        reference = _batch_bytes(tmp / "full", full.manifest)

        partial = run_inference(ds, plan, weights, stats,
                                _options(tmp / "ck", max_batches=1))
        assert not partial.complete
        assert partial.manifest.completed == {0}
        resumed = run_inference(ds, plan, weights, stats, _options(tmp / "ck"))
        assert resumed.complete
        assert _batch_bytes(tmp / "ck", resumed.manifest) == reference

    def test_every_stop_point_resumes_identically(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        full = run_inference(ds, plan, weights, stats, _options(tmp / "full"))
        reference = _batch_bytes(tmp / "full", full.manifest)
        for stop_after in (1, 2):
            ck = tmp / f"ck{stop_after}"
            run_inference(ds, plan, weights, stats,
                          _options(ck, max_batches=stop_after))
            resumed = run_inference(ds, plan, weights, stats, _options(ck))
            assert resumed.complete
            assert _batch_bytes(ck, resumed.manifest) == reference

    def test_plan_fingerprint_mismatch(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        run_inference(ds, plan, weights, stats,
                      _options(tmp / "ck", max_batches=1))
        other_plan = plan_tiles(100, 100, 64, 16)
        with pytest.raises(FingerprintMismatch, match="plan fingerprint"):
            run_inference(ds, other_plan, weights, stats, _options(tmp / "ck"))

    def test_model_fingerprint_mismatch(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        run_inference(ds, plan, weights, stats,
                      _options(tmp / "ck", max_batches=1))
        other = build_reference_vit(
            ViTConfig(patch_size=8, embed_dim=16, depth=2, heads=2,
                      mlp_ratio=2.0, in_bands=3, sample_size=64))
        with pytest.raises(FingerprintMismatch, match="model fingerprint"):
            run_inference(ds, plan, other, stats, _options(tmp / "ck"))

    def test_batch_size_mismatch(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        run_inference(ds, plan, weights, stats,
                      _options(tmp / "ck", max_batches=1))
        with pytest.raises(FingerprintMismatch, match="batch size"):
            run_inference(ds, plan, weights, stats,
                          InferenceOptions(checkpoint_dir=tmp / "ck",
                                           batch_size=2))

    def test_manifest_soundness_at_stop_points(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        for stop_after in (1, 2, 3):
            ck = tmp / f"s{stop_after}"
            run_inference(ds, plan, weights, stats,
                          _options(ck, max_batches=stop_after))
            manifest = CheckpointManifest.from_json(
                (ck / MANIFEST_NAME).read_text())
            for bid in manifest.completed:
                assert batch_path(ck, bid).exists()
                load_batch(batch_path(ck, bid))  # fully readable

    def test_crash_between_write_and_record(self, small_run, monkeypatch):
        # A batch file that lands on disk without being recorded is re-done.
        ds, plan, weights, stats, tmp = small_run
        full = run_inference(ds, plan, weights, stats, _options(tmp / "full"))
        reference = _batch_bytes(tmp / "full", full.manifest)

        ck = tmp / "crash"
        real = runner_mod._atomic_write
        state = {"manifest_writes": 0}

        def dying_write(path, payload):
            if path.name == MANIFEST_NAME:
                state["manifest_writes"] += 1
                if state["manifest_writes"] == 2:  # after batch 0 was written
                    raise KeyboardInterrupt
            real(path, payload)

        monkeypatch.setattr(runner_mod, "_atomic_write", dying_write)
        with pytest.raises(KeyboardInterrupt):
            run_inference(ds, plan, weights, stats, _options(ck))
        monkeypatch.setattr(runner_mod, "_atomic_write", real)

        manifest = CheckpointManifest.from_json((ck / MANIFEST_NAME).read_text())
        assert manifest.completed == set()  # written but never recorded
        resumed = run_inference(ds, plan, weights, stats, _options(ck))
        assert _batch_bytes(ck, resumed.manifest) == reference

    def test_disk_full_is_resumable(self, small_run, monkeypatch):
        ds, plan, weights, stats, tmp = small_run
        ck = tmp / "ck"
        real = runner_mod._atomic_write
        calls = {"n": 0}

        def failing_write(path, payload):
            calls["n"] += 1
            if calls["n"] == 3:
                raise ResumableRunError(f"disk full while writing {path}")
            real(path, payload)

        monkeypatch.setattr(runner_mod, "_atomic_write", failing_write)
        with pytest.raises(ResumableRunError, match="disk full"):
            run_inference(ds, plan, weights, stats, _options(ck))
        monkeypatch.setattr(runner_mod, "_atomic_write", real)
        resumed = run_inference(ds, plan, weights, stats, _options(ck))
        assert resumed.complete

    def test_enospc_maps_to_resumable(self, tmp_path, monkeypatch):
        def boom(fd):
            raise OSError(errno.ENOSPC, "no space")

        monkeypatch.setattr(runner_mod.os, "fsync", boom)
        with pytest.raises(ResumableRunError, match="disk full"):
            runner_mod._atomic_write(tmp_path / "x.bin", b"payload")

    def test_pause_between_batches(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        t0 = time.perf_counter()
        quick = run_inference(ds, plan, weights, stats, _options(tmp / "q"))
        quick_elapsed = time.perf_counter() - t0
        t0 = time.perf_counter()
        slow = run_inference(ds, plan, weights, stats,
                             _options(tmp / "s", pause_ms=100))
        slow_elapsed = time.perf_counter() - t0
        # 3 batches: two inter-batch pauses of 100 ms.
        assert slow_elapsed >= quick_elapsed + 0.15
        assert list(_batch_bytes(tmp / "q", quick.manifest).values()) \
            == list(_batch_bytes(tmp / "s", slow.manifest).values())

    def test_worker_pool_matches_serial(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        serial = run_inference(ds, plan, weights, stats, _options(tmp / "w1"))
        pooled = run_inference(ds, plan, weights, stats,
                               _options(tmp / "w4", workers=4))
        assert list(_batch_bytes(tmp / "w1", serial.manifest).values()) \
            == list(_batch_bytes(tmp / "w4", pooled.manifest).values())

    def test_progress_callback(self, small_run):
        ds, plan, weights, stats, tmp = small_run
        seen = []
        run_inference(ds, plan, weights, stats,
                      _options(tmp / "cb",
                               on_batch=lambda done, total:
                               seen.append((done, total))))
        assert seen == [(1, 3), (2, 3), (3, 3)]


class TestBatchFiles:
    def test_write_load_round_trip(self, tmp_path):
        from geodeep.encoder import PatchFeatureGrid
        rng = np.random.default_rng(3)
        grids = [PatchFeatureGrid(0, 0, rng.normal(size=(4, 4, 8))
                                  .astype(np.float32)),
                 PatchFeatureGrid(32, 8, rng.normal(size=(4, 4, 8))
                                  .astype(np.float32))]
        p = tmp_path / "batch_0.bin"
        write_batch(p, 0, grids)
        back = load_batch(p)
        assert [(g.col_off, g.row_off) for g in back] == [(0, 0), (32, 8)]
        for a, b in zip(grids, back):
            np.testing.assert_array_equal(a.data, b.data)
