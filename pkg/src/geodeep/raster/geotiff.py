"""Minimal self-contained GeoTIFF codec.

Covers the subset of TIFF 6.0 + GeoTIFF this pipeline produces and consumes:
single-image classic TIFF (little or big endian on read, little endian on
write), tiled or stripped storage, band-interleaved (planar) or
pixel-interleaved (chunky) layouts, uint8/uint16/int16/float32 samples, and
no compression or zlib deflate. Georeferencing comes from
ModelPixelScale + ModelTiepoint or from ModelTransformation; the CRS is
carried as an EPSG code in the GeoKey directory. Files with rotation terms
in ModelTransformation are rejected.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InputError

# TIFF tag ids
TAG_IMAGE_WIDTH = 256
TAG_IMAGE_LENGTH = 257
TAG_BITS_PER_SAMPLE = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279
TAG_PLANAR_CONFIG = 284
TAG_PREDICTOR = 317
TAG_TILE_WIDTH = 322
TAG_TILE_LENGTH = 323
TAG_TILE_OFFSETS = 324
TAG_TILE_BYTE_COUNTS = 325
TAG_SAMPLE_FORMAT = 339
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_MODEL_TRANSFORMATION = 34264
TAG_GEO_KEY_DIRECTORY = 34735
TAG_GDAL_NODATA = 42113

COMPRESSION_NONE = 1
COMPRESSION_DEFLATE_ADOBE = 8
COMPRESSION_DEFLATE_OLD = 32946

# GeoKey ids
KEY_MODEL_TYPE = 1024
KEY_RASTER_TYPE = 1025
KEY_GEOGRAPHIC_TYPE = 2048
KEY_PROJECTED_CS_TYPE = 3072

MODEL_TYPE_PROJECTED = 1
MODEL_TYPE_GEOGRAPHIC = 2
RASTER_PIXEL_IS_AREA = 1

# (struct code, byte size) per TIFF field type id
_FIELD_TYPES = {
    1: ("B", 1),   # BYTE
    2: ("c", 1),   # ASCII
    3: ("H", 2),   # SHORT
    4: ("I", 4),   # LONG
    5: ("II", 8),  # RATIONAL
    6: ("b", 1),   # SBYTE
    7: ("B", 1),   # UNDEFINED
    8: ("h", 2),   # SSHORT
    9: ("i", 4),   # SLONG
    10: ("ii", 8),  # SRATIONAL
    11: ("f", 4),  # FLOAT
    12: ("d", 8),  # DOUBLE
}

# sample type name -> (numpy dtype code, TIFF SampleFormat, bits per sample)
SAMPLE_TYPES = {
    "uint8": ("u1", 1, 8),
    "uint16": ("u2", 1, 16),
    "int16": ("i2", 2, 16),
    "float32": ("f4", 3, 32),
}

_DTYPE_TO_SAMPLE_TYPE = {np.dtype(v[0]).str[1:]: k for k, v in SAMPLE_TYPES.items()}


@dataclass
class TiffInfo:
    """Parsed structure of a single-image GeoTIFF file."""

    path: Path
    byte_order: str  # "<" or ">"
    width: int
    height: int
    samples: int
    sample_type: str
    compression: int
    planar: int
    is_tiled: bool
    chunk_w: int  # tile width, or image width for strips
    chunk_h: int  # tile length, or rows per strip
    offsets: list[int]
    byte_counts: list[int]
    pixel_scale: tuple[float, float] | None = None
    tiepoint: tuple[float, ...] | None = None
    transform: tuple[float, ...] | None = None
    geo_keys: dict[int, int] = field(default_factory=dict)
    nodata: float | None = None

    @property
    def chunks_across(self) -> int:
        return (self.width + self.chunk_w - 1) // self.chunk_w

    @property
    def chunks_down(self) -> int:
        return (self.height + self.chunk_h - 1) // self.chunk_h


def _read_ifd_value(f, order: str, type_id: int, count: int, raw: bytes):
    code, size = _FIELD_TYPES[type_id]
    total = size * count
    if total > 4:
        (offset,) = struct.unpack(order + "I", raw)
        pos = f.tell()
        f.seek(offset)
        payload = f.read(total)
        f.seek(pos)
    else:
        payload = raw[:total]
    if type_id == 2:  # ASCII
        return payload.split(b"\x00")[0].decode("ascii", errors="replace")
    if type_id in (5, 10):  # rationals -> floats
        vals = struct.unpack(order + code * count, payload)
        return [vals[2 * i] / vals[2 * i + 1] if vals[2 * i + 1] else 0.0
                for i in range(count)]
    values = struct.unpack(order + code * count, payload)
    return list(values)


def read_info(path: Path | str) -> TiffInfo:
    """Parse the first IFD of a GeoTIFF and return its layout and geo tags.

    No pixel data is read. Raises InputError for files outside the supported
    subset (unknown sample types, unsupported compression, rotation).
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"raster not found: {path}")
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) < 8:
            raise InputError(f"not a TIFF file: {path}")
        if header[:2] == b"II":
            order = "<"
        elif header[:2] == b"MM":
            order = ">"
        else:
            raise InputError(f"not a TIFF file: {path}")
        (magic,) = struct.unpack(order + "H", header[2:4])
        if magic != 42:
            raise InputError(f"unsupported TIFF variant (magic {magic}): {path}")
        (ifd_offset,) = struct.unpack(order + "I", header[4:8])

        f.seek(ifd_offset)
        (n_entries,) = struct.unpack(order + "H", f.read(2))
        tags: dict[int, object] = {}
        for _ in range(n_entries):
            entry = f.read(12)
            tag, type_id, count = struct.unpack(order + "HHI", entry[:8])
            if type_id not in _FIELD_TYPES:
                continue
            tags[tag] = _read_ifd_value(f, order, type_id, count, entry[8:12])

    def _scalar(tag, default=None):
        v = tags.get(tag)
        if v is None:
            return default
        return v[0] if isinstance(v, list) else v

    width = _scalar(TAG_IMAGE_WIDTH)
    height = _scalar(TAG_IMAGE_LENGTH)
    if width is None or height is None:
        raise InputError(f"missing image dimensions: {path}")
    samples = int(_scalar(TAG_SAMPLES_PER_PIXEL, 1))

    bits = tags.get(TAG_BITS_PER_SAMPLE, [8])
    if len(set(bits)) != 1:
        raise InputError(f"mixed bit depths unsupported: {path}")
    fmts = tags.get(TAG_SAMPLE_FORMAT, [1] * samples)
    if len(set(fmts)) != 1:
        raise InputError(f"mixed sample formats unsupported: {path}")
    key = (int(fmts[0]), int(bits[0]))
    for name, (_, fmt, nbits) in SAMPLE_TYPES.items():
        if key == (fmt, nbits):
            sample_type = name
            break
    else:
        raise InputError(
            f"unsupported sample type (format {key[0]}, {key[1]} bits): {path}"
        )

    compression = int(_scalar(TAG_COMPRESSION, COMPRESSION_NONE))
    if compression not in (COMPRESSION_NONE, COMPRESSION_DEFLATE_ADOBE,
                           COMPRESSION_DEFLATE_OLD):
        raise InputError(f"unsupported compression {compression}: {path}")
    if int(_scalar(TAG_PREDICTOR, 1)) != 1:
        raise InputError(f"TIFF predictor unsupported: {path}")

    planar = int(_scalar(TAG_PLANAR_CONFIG, 1))
    if planar not in (1, 2):
        raise InputError(f"unsupported planar configuration {planar}: {path}")

    if TAG_TILE_OFFSETS in tags:
        is_tiled = True
        chunk_w = int(_scalar(TAG_TILE_WIDTH))
        chunk_h = int(_scalar(TAG_TILE_LENGTH))
        offsets = [int(v) for v in tags[TAG_TILE_OFFSETS]]
        counts = [int(v) for v in tags[TAG_TILE_BYTE_COUNTS]]
    elif TAG_STRIP_OFFSETS in tags:
        is_tiled = False
        chunk_w = int(width)
        chunk_h = int(_scalar(TAG_ROWS_PER_STRIP, height))
        offsets = [int(v) for v in tags[TAG_STRIP_OFFSETS]]
        counts = [int(v) for v in tags[TAG_STRIP_BYTE_COUNTS]]
    else:
        raise InputError(f"no tile or strip layout: {path}")

    transform = tags.get(TAG_MODEL_TRANSFORMATION)
    pixel_scale = tags.get(TAG_MODEL_PIXEL_SCALE)
    tiepoint = tags.get(TAG_MODEL_TIEPOINT)
    if transform is not None:
        if len(transform) < 8:
            raise InputError(f"malformed ModelTransformation: {path}")
        if transform[1] != 0.0 or transform[4] != 0.0:
            raise InputError(f"rotated raster unsupported: {path}")
    elif pixel_scale is None or tiepoint is None:
        raise InputError(f"missing georeferencing (not a GeoTIFF?): {path}")

    geo_keys: dict[int, int] = {}
    gk = tags.get(TAG_GEO_KEY_DIRECTORY)
    if gk and len(gk) >= 4:
        n_keys = int(gk[3])
        for i in range(n_keys):
            base = 4 + 4 * i
            if base + 4 > len(gk):
                break
            key_id, location, count, value = gk[base:base + 4]
            if location == 0 and count == 1:
                geo_keys[int(key_id)] = int(value)

    nodata = None
    nd_text = tags.get(TAG_GDAL_NODATA)
    if isinstance(nd_text, str):
        try:
            nodata = float(nd_text.strip())
        except ValueError:
            nodata = None

    return TiffInfo(
        path=path,
        byte_order=order,
        width=int(width),
        height=int(height),
        samples=samples,
        sample_type=sample_type,
        compression=compression,
        planar=planar,
        is_tiled=is_tiled,
        chunk_w=chunk_w,
        chunk_h=chunk_h,
        offsets=offsets,
        byte_counts=counts,
        pixel_scale=tuple(pixel_scale[:2]) if pixel_scale else None,
        tiepoint=tuple(tiepoint) if tiepoint else None,
        transform=tuple(transform) if transform else None,
        geo_keys=geo_keys,
        nodata=nodata,
    )


def _decode_chunk(info: TiffInfo, raw: bytes, n_values: int) -> np.ndarray:
    if info.compression == COMPRESSION_NONE:
        payload = raw
    else:
        payload = zlib.decompress(raw)
    dtype = np.dtype(info.byte_order + SAMPLE_TYPES[info.sample_type][0])
    arr = np.frombuffer(payload, dtype=dtype, count=n_values)
    return arr.astype(arr.dtype.newbyteorder("="), copy=False)


def read_band_window(info: TiffInfo, band: int, col_off: int, row_off: int,
                     width: int, height: int) -> np.ndarray:
    """Read one band of a pixel window in the file's native dtype."""
    if not (0 <= band < info.samples):
        raise InputError(f"invalid band index {band} (raster has {info.samples})")
    if (col_off < 0 or row_off < 0 or width < 1 or height < 1
            or col_off + width > info.width or row_off + height > info.height):
        raise InputError(
            f"window ({col_off},{row_off},{width},{height}) outside raster "
            f"{info.width}x{info.height}"
        )
    dtype = np.dtype(SAMPLE_TYPES[info.sample_type][0])
    out = np.zeros((height, width), dtype=dtype)
    per_band = info.chunks_across * info.chunks_down

    with open(info.path, "rb") as f:
        ty0 = row_off // info.chunk_h
        ty1 = (row_off + height - 1) // info.chunk_h
        tx0 = col_off // info.chunk_w
        tx1 = (col_off + width - 1) // info.chunk_w
        for ty in range(ty0, ty1 + 1):
            # Strips at the bottom edge are short; tiles are always padded.
            rows = info.chunk_h
            if not info.is_tiled:
                rows = min(info.chunk_h, info.height - ty * info.chunk_h)
            for tx in range(tx0, tx1 + 1):
                idx = ty * info.chunks_across + tx
                if info.planar == 2:
                    idx += band * per_band
                f.seek(info.offsets[idx])
                raw = f.read(info.byte_counts[idx])
                if info.planar == 1:
                    chunk = _decode_chunk(info, raw, rows * info.chunk_w * info.samples)
                    chunk = chunk.reshape(rows, info.chunk_w, info.samples)[:, :, band]
                else:
                    chunk = _decode_chunk(info, raw, rows * info.chunk_w)
                    chunk = chunk.reshape(rows, info.chunk_w)
                # Intersect chunk extent with the requested window.
                c0 = tx * info.chunk_w
                r0 = ty * info.chunk_h
                src_r = slice(max(row_off - r0, 0),
                              min(row_off + height - r0, rows))
                src_c = slice(max(col_off - c0, 0),
                              min(col_off + width - c0, info.chunk_w))
                dst_r = slice(r0 + src_r.start - row_off, r0 + src_r.stop - row_off)
                dst_c = slice(c0 + src_c.start - col_off, c0 + src_c.stop - col_off)
                out[dst_r, dst_c] = chunk[src_r, src_c]
    return out


def _encode_crs(crs_id: str) -> list[int] | None:
    """Build a GeoKey directory (flat shorts) for an "EPSG:n" identifier."""
    if not crs_id:
        return None
    parts = crs_id.split(":")
    if len(parts) != 2 or parts[0].upper() != "EPSG" or not parts[1].isdigit():
        raise InputError(f"unsupported CRS identifier (want 'EPSG:<code>'): {crs_id!r}")
    code = int(parts[1])
    geographic = 4000 <= code < 5000
    keys = [
        (KEY_MODEL_TYPE, 0, 1,
         MODEL_TYPE_GEOGRAPHIC if geographic else MODEL_TYPE_PROJECTED),
        (KEY_RASTER_TYPE, 0, 1, RASTER_PIXEL_IS_AREA),
        (KEY_GEOGRAPHIC_TYPE if geographic else KEY_PROJECTED_CS_TYPE, 0, 1, code),
    ]
    flat = [1, 1, 0, len(keys)]
    for k in keys:
        flat.extend(k)
    return flat


def decode_crs(geo_keys: dict[int, int]) -> str:
    """Recover an "EPSG:n" identifier from parsed GeoKeys ("" if absent)."""
    code = geo_keys.get(KEY_PROJECTED_CS_TYPE) or geo_keys.get(KEY_GEOGRAPHIC_TYPE)
    if not code or code in (32767,):  # 32767 = user-defined
        return ""
    return f"EPSG:{code}"


def _nodata_text(nodata: float) -> str:
    if math.isnan(nodata):
        return "nan"
    if float(nodata) == int(nodata):
        return str(int(nodata))
    return repr(float(nodata))


def write_geotiff(path: Path | str, data: np.ndarray, *,
                  pixel_scale: tuple[float, float] | None = None,
                  tiepoint: tuple[float, ...] | None = None,
                  transform: tuple[float, ...] | None = None,
                  crs_id: str = "",
                  nodata: float | None = None,
                  compression: str = "deflate",
                  tile_size: int = 256) -> Path:
    """Write a band-interleaved tiled GeoTIFF (classic little-endian TIFF).

    `data` is (bands, height, width) in one of the supported dtypes. Either
    pixel_scale+tiepoint or a 16-element transform matrix must be given.
    Compression is "deflate" or "none". Deterministic: identical inputs
    produce byte-identical files.
    """
    path = Path(path)
    if data.ndim != 3:
        raise ValueError(f"expected (bands, height, width) array, got {data.shape}")
    bands, height, width = data.shape
    if bands < 1 or height < 1 or width < 1:
        raise ValueError(f"degenerate raster shape {data.shape}")
    sample_type = _DTYPE_TO_SAMPLE_TYPE.get(np.dtype(data.dtype).str[1:])
    if sample_type is None:
        raise ValueError(f"unsupported array dtype {data.dtype}")
    if compression not in ("deflate", "none"):
        raise ValueError(f"unsupported compression {compression!r}")
    if tile_size % 16 != 0 or tile_size < 16:
        raise ValueError("tile size must be a positive multiple of 16")
    if transform is None and (pixel_scale is None or tiepoint is None):
        raise ValueError("georeferencing required (pixel_scale+tiepoint or transform)")

    dtype_code, sample_fmt, bits = SAMPLE_TYPES[sample_type]
    le = np.dtype("<" + dtype_code)
    tiles_across = (width + tile_size - 1) // tile_size
    tiles_down = (height + tile_size - 1) // tile_size

    # Tile payloads, band-major (PlanarConfiguration = 2), zero padded at edges.
    blobs: list[bytes] = []
    for b in range(bands):
        band_arr = np.ascontiguousarray(data[b], dtype=le)
        for ty in range(tiles_down):
            for tx in range(tiles_across):
                tile = np.zeros((tile_size, tile_size), dtype=le)
                r0, c0 = ty * tile_size, tx * tile_size
                h = min(tile_size, height - r0)
                w = min(tile_size, width - c0)
                tile[:h, :w] = band_arr[r0:r0 + h, c0:c0 + w]
                raw = tile.tobytes()
                blobs.append(zlib.compress(raw) if compression == "deflate" else raw)

    tile_offsets: list[int] = []
    pos = 8  # right after the header
    for blob in blobs:
        tile_offsets.append(pos)
        pos += len(blob) + (len(blob) & 1)  # keep offsets word aligned

    entries: list[tuple[int, int, list]] = [
        (TAG_IMAGE_WIDTH, 4, [width]),
        (TAG_IMAGE_LENGTH, 4, [height]),
        (TAG_BITS_PER_SAMPLE, 3, [bits] * bands),
        (TAG_COMPRESSION, 3,
         [COMPRESSION_DEFLATE_ADOBE if compression == "deflate" else COMPRESSION_NONE]),
        (TAG_PHOTOMETRIC, 3, [1]),
        (TAG_SAMPLES_PER_PIXEL, 3, [bands]),
        (TAG_PLANAR_CONFIG, 3, [2]),
        (TAG_TILE_WIDTH, 4, [tile_size]),
        (TAG_TILE_LENGTH, 4, [tile_size]),
        (TAG_TILE_OFFSETS, 4, tile_offsets),
        (TAG_TILE_BYTE_COUNTS, 4, [len(b) for b in blobs]),
        (TAG_SAMPLE_FORMAT, 3, [sample_fmt] * bands),
    ]
    if transform is not None:
        entries.append((TAG_MODEL_TRANSFORMATION, 12, [float(v) for v in transform]))
    else:
        sx, sy = pixel_scale
        entries.append((TAG_MODEL_PIXEL_SCALE, 12, [float(sx), float(sy), 0.0]))
        tp = list(tiepoint) + [0.0] * (6 - len(tiepoint))
        entries.append((TAG_MODEL_TIEPOINT, 12, [float(v) for v in tp[:6]]))
    geo_dir = _encode_crs(crs_id)
    if geo_dir is not None:
        entries.append((TAG_GEO_KEY_DIRECTORY, 3, geo_dir))
    if nodata is not None:
        entries.append((TAG_GDAL_NODATA, 2, _nodata_text(nodata)))
    entries.sort(key=lambda e: e[0])

    # Lay out out-of-line tag payloads after the tile data, then the IFD.
    def _payload(type_id: int, values) -> bytes:
        code, _ = _FIELD_TYPES[type_id]
        if type_id == 2:
            return values.encode("ascii") + b"\x00"
        return struct.pack("<" + code * len(values), *values)

    extra_pos = pos
    packed: list[tuple[int, int, int, bytes, int | None]] = []
    for tag, type_id, values in entries:
        payload = _payload(type_id, values)
        count = len(values) + 1 if type_id == 2 else len(values)
        if len(payload) > 4:
            packed.append((tag, type_id, count, payload, extra_pos))
            extra_pos += len(payload) + (len(payload) & 1)
        else:
            packed.append((tag, type_id, count, payload, None))
    ifd_pos = extra_pos
    if ifd_pos + 6 + 12 * len(packed) >= 2 ** 32:
        raise ValueError("raster too large for classic TIFF")

    buf = bytearray()
    buf += struct.pack("<2sHI", b"II", 42, ifd_pos)
    for blob in blobs:
        buf += blob
        if len(blob) & 1:
            buf += b"\x00"
    for tag, type_id, count, payload, off in packed:
        if off is not None:
            buf += payload
            if len(payload) & 1:
                buf += b"\x00"
    assert len(buf) == ifd_pos
    buf += struct.pack("<H", len(packed))
    for tag, type_id, count, payload, off in packed:
        buf += struct.pack("<HHI", tag, type_id, count)
        if off is not None:
            buf += struct.pack("<I", off)
        else:
            buf += payload.ljust(4, b"\x00")
    buf += struct.pack("<I", 0)  # no further IFDs

    path.write_bytes(buf)
    return path
