"""Disk-backed, resumable batch execution of tile inference.

Checkpoint directory layout:
  manifest.json    run fingerprints, parameter snapshot, completed batch ids
  batch_<id>.bin   4-byte LE header length, JSON header (tile offsets, grid
                   dims), then float32 LE patch grids in tile order

Batches commit write-then-record: the batch file is fully written (to a
temp name, then atomically renamed) before its id enters the manifest, so a
crash at any instant only re-does work and never records a missing batch.
"""

from __future__ import annotations

import errno
import hashlib
import json
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..errors import FingerprintMismatch, ResumableRunError
from ..raster import BandStats, RasterDataset, read_window
from ..tiler import TilePlan, normalize_block
from .vit import ModelWeights, PatchFeatureGrid, encode_tile

MANIFEST_NAME = "manifest.json"


def plan_fingerprint(plan: TilePlan) -> str:
    h = hashlib.sha256()
    h.update(json.dumps([plan.raster_w, plan.raster_h, plan.sample_size,
                         plan.stride]).encode())
    h.update(np.asarray(plan.offsets, dtype="<i8").tobytes())
    return h.hexdigest()


@dataclass
class InferenceOptions:
    checkpoint_dir: Path
    batch_size: int = 16
    pause_ms: int = 0
    workers: int = 1
    band_strategy: str = "none"
    quantized: bool = False
    max_batches: int | None = None  # stop (resumable) after this many new batches
    on_batch: Callable[[int, int], None] | None = None  # (done, total)


@dataclass
class CheckpointManifest:
    model_fingerprint: str
    plan_fingerprint: str
    params: dict
    batch_size: int
    n_tiles: int
    completed: set[int] = field(default_factory=set)

    @property
    def n_batches(self) -> int:
        return -(-self.n_tiles // self.batch_size)

    def to_json(self) -> str:
        return json.dumps({
            "version": 1,
            "model_fingerprint": self.model_fingerprint,
            "plan_fingerprint": self.plan_fingerprint,
            "params": self.params,
            "batch_size": self.batch_size,
            "n_tiles": self.n_tiles,
            "completed": sorted(self.completed),
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "CheckpointManifest":
        d = json.loads(text)
        return cls(
            model_fingerprint=d["model_fingerprint"],
            plan_fingerprint=d["plan_fingerprint"],
            params=d["params"],
            batch_size=d["batch_size"],
            n_tiles=d["n_tiles"],
            completed=set(d["completed"]),
        )

    def check_compatible(self, other: "CheckpointManifest") -> None:
        """Raise FingerprintMismatch naming the first field that differs."""
        if self.model_fingerprint != other.model_fingerprint:
            raise FingerprintMismatch("model fingerprint mismatch")
        if self.plan_fingerprint != other.plan_fingerprint:
            raise FingerprintMismatch("plan fingerprint mismatch")
        if self.batch_size != other.batch_size:
            raise FingerprintMismatch("batch size mismatch")
        for key in sorted(set(self.params) | set(other.params)):
            if self.params.get(key) != other.params.get(key):
                raise FingerprintMismatch(f"params.{key} mismatch")


@dataclass
class InferenceRun:
    manifest: CheckpointManifest
    checkpoint_dir: Path
    complete: bool

    @property
    def batch_paths(self) -> list[Path]:
        return [batch_path(self.checkpoint_dir, i)
                for i in sorted(self.manifest.completed)]


def batch_path(checkpoint_dir: Path, batch_id: int) -> Path:
    return Path(checkpoint_dir) / f"batch_{batch_id}.bin"


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except OSError as e:
        tmp.unlink(missing_ok=True)
        if e.errno == errno.ENOSPC:
            raise ResumableRunError(f"disk full while writing {path}") from e
        raise


def write_batch(path: Path, batch_id: int, grids: list[PatchFeatureGrid]) -> None:
    header = json.dumps({
        "batch_id": batch_id,
        "tile_offsets": [[g.col_off, g.row_off] for g in grids],
        "grid_h": grids[0].grid_h,
        "grid_w": grids[0].grid_w,
        "feature_dim": grids[0].feature_dim,
    }).encode()
    body = b"".join(np.ascontiguousarray(g.data, dtype="<f4").tobytes()
                    for g in grids)
    _atomic_write(path, struct.pack("<I", len(header)) + header + body)


def load_batch(path: Path) -> list[PatchFeatureGrid]:
    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4:4 + hlen].decode())
    gh, gw, d = header["grid_h"], header["grid_w"], header["feature_dim"]
    per_grid = gh * gw * d
    body = np.frombuffer(raw[4 + hlen:], dtype="<f4")
    grids = []
    for i, (c, r) in enumerate(header["tile_offsets"]):
        data = body[i * per_grid:(i + 1) * per_grid]
        grids.append(PatchFeatureGrid(
            col_off=c, row_off=r,
            data=data.reshape(gh, gw, d).astype(np.float32)))
    return grids


def _encode_one(ds: RasterDataset, weights: ModelWeights, stats: BandStats,
                bands: list[int] | None, sample_size: int,
                offset: tuple[int, int]) -> PatchFeatureGrid:
    col, row = offset
    block = read_window(ds, (col, row, sample_size, sample_size), bands)
    return encode_tile(weights, normalize_block(block, stats))


def run_inference(ds: RasterDataset, plan: TilePlan, weights: ModelWeights,
                  stats: BandStats, options: InferenceOptions) -> InferenceRun:
    """Encode all planned tiles in batches, checkpointing each batch to disk.

    On restart with identical fingerprints, completed batches are skipped
    and the final set of batch files is identical to an uninterrupted run.
    A differing configuration fails with FingerprintMismatch naming the
    field. Between batches the executor sleeps `pause_ms`.
    """
    ckpt = Path(options.checkpoint_dir)
    ckpt.mkdir(parents=True, exist_ok=True)
    bands = list(weights.band_selection) if weights.band_selection else None
    expected = CheckpointManifest(
        model_fingerprint=weights.fingerprint(),
        plan_fingerprint=plan_fingerprint(plan),
        params={
            "sample_size": plan.sample_size,
            "stride": plan.stride,
            "bands": bands if bands else weights.cfg.in_bands,
            "adaptation": options.band_strategy,
            "quantized": options.quantized,
        },
        batch_size=options.batch_size,
        n_tiles=plan.tile_count,
    )
    manifest_file = ckpt / MANIFEST_NAME
    if manifest_file.exists():
        manifest = CheckpointManifest.from_json(manifest_file.read_text())
        expected.check_compatible(manifest)
    else:
        manifest = expected
        _atomic_write(manifest_file, manifest.to_json().encode())

    n_batches = manifest.n_batches
    new_done = 0
    pool = ThreadPoolExecutor(max_workers=options.workers) \
        if options.workers > 1 else None
    try:
        for bid in range(n_batches):
            if bid in manifest.completed:
                continue
            if options.max_batches is not None and new_done >= options.max_batches:
                return InferenceRun(manifest=manifest, checkpoint_dir=ckpt,
                                    complete=False)
            lo = bid * options.batch_size
            offsets = plan.offsets[lo:lo + options.batch_size]
            if pool is not None:
                grids = list(pool.map(
                    lambda off: _encode_one(ds, weights, stats, bands,
                                            plan.sample_size, off),
                    offsets))
            else:
                grids = [_encode_one(ds, weights, stats, bands,
                                     plan.sample_size, off) for off in offsets]
            write_batch(batch_path(ckpt, bid), bid, grids)
            manifest.completed.add(bid)
            _atomic_write(manifest_file, manifest.to_json().encode())
            new_done += 1
            if options.on_batch:
                options.on_batch(len(manifest.completed), n_batches)
            if options.pause_ms > 0 and len(manifest.completed) < n_batches:
                time.sleep(options.pause_ms / 1000.0)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)
    return InferenceRun(manifest=manifest, checkpoint_dir=ckpt, complete=True)


def cleanup_checkpoints(run: InferenceRun) -> None:
    """Remove batch files and the manifest once their consumer is done."""
    for p in run.batch_paths:
        p.unlink(missing_ok=True)
    (run.checkpoint_dir / MANIFEST_NAME).unlink(missing_ok=True)
    try:
        run.checkpoint_dir.rmdir()
    except OSError:
        pass  # directory not empty or shared; leave it
