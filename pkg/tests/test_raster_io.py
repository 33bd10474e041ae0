"""Raster and point I/O: codec round trips, geotransform math, band stats."""

from __future__ import annotations

import json
import math
import struct

import numpy as np
import pytest

from geodeep.errors import InputError
from geodeep.raster import (
    GeoTransform,
    compute_band_stats,
    open_raster,
    read_points,
    read_window,
    write_raster,
)
from geodeep.raster import geotiff

from conftest import CRS, UTM_GT, gradient_band, write_points_file, write_test_raster


class TestOpenRaster:
    def test_metadata_echo(self, tmp_path):
        data = np.zeros((3, 100, 100), dtype=np.uint8)
        geotiff.write_geotiff(tmp_path / "u8.tif", data,
                              pixel_scale=(10.0, 10.0),
                              tiepoint=(0, 0, 0, 500_000.0, 4_200_000.0, 0),
                              crs_id=CRS)
        ds = open_raster(tmp_path / "u8.tif")
        assert (ds.width, ds.height, ds.band_count) == (100, 100, 3)
        assert ds.sample_type == "uint8"
        assert ds.crs_id == CRS
        assert ds.geotransform == UTM_GT

    def test_rotated_raster_rejected(self, tmp_path):
        transform = (10.0, 1.5, 0.0, 500_000.0,
                     0.0, -10.0, 0.0, 4_200_000.0,
                     0.0, 0.0, 0.0, 0.0,
                     0.0, 0.0, 0.0, 1.0)
        geotiff.write_geotiff(tmp_path / "rot.tif",
                              np.zeros((1, 8, 8), dtype=np.float32),
                              transform=transform)
        with pytest.raises(InputError, match="rotated raster unsupported"):
            open_raster(tmp_path / "rot.tif")

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            open_raster(tmp_path / "nope.tif")

    def test_unsupported_sample_type(self, tmp_path):
        # float64 is outside the supported set; splice the tag by hand.
        ds_path = tmp_path / "f32.tif"
        write_test_raster(ds_path, np.zeros((1, 4, 4), dtype=np.float32))
        raw = bytearray(ds_path.read_bytes())
        # BitsPerSample for one band is inline; 32 -> 64 flips it to float64.
        idx = raw.find(struct.pack("<HHI", 258, 3, 1))
        assert idx != -1
        raw[idx + 8:idx + 10] = struct.pack("<H", 64)
        bad = tmp_path / "f64.tif"
        bad.write_bytes(bytes(raw))
        with pytest.raises(InputError, match="unsupported sample type"):
            open_raster(bad)

    def test_not_a_tiff(self, tmp_path):
        p = tmp_path / "junk.tif"
        p.write_bytes(b"definitely not a tiff")
        with pytest.raises(InputError, match="not a TIFF"):
            open_raster(p)


class TestReadWindow:
    def test_constant_raster_full_extent(self, tmp_path):
        ds = write_test_raster(tmp_path / "c.tif",
                               np.full((2, 9, 9), 7.0, dtype=np.float32))
        block = read_window(ds, (0, 0, 9, 9))
        assert block.data.shape == (2, 9, 9)
        assert np.all(block.data == 7.0)

    def test_gradient_window(self, tmp_path):
        data = np.stack([np.full((6, 6), 1.0, dtype=np.float32),
                         gradient_band(6, 6),
                         np.full((6, 6), 2.0, dtype=np.float32)])
        ds = write_test_raster(tmp_path / "g.tif", data)
        block = read_window(ds, (0, 0, 2, 2), bands=[1])
        assert block.data[0].ravel().tolist() == [0.0, 1.0, 10.0, 11.0]

    def test_band_reordering(self, tmp_path):
        data = np.stack([np.full((4, 4), float(v), dtype=np.float32)
                         for v in (10, 20, 30)])
        ds = write_test_raster(tmp_path / "b.tif", data)
        block = read_window(ds, (0, 0, 4, 4), bands=[2, 0, 1])
        assert block.data[:, 0, 0].tolist() == [30.0, 10.0, 20.0]

    def test_out_of_bounds_window(self, gradient_raster):
        with pytest.raises(InputError, match="outside raster"):
            read_window(gradient_raster, (8, 8, 8, 8))

    def test_invalid_band(self, gradient_raster):
        with pytest.raises(InputError, match="invalid band"):
            read_window(gradient_raster, (0, 0, 2, 2), bands=[5])

    def test_nodata_mapped_to_nan(self, tmp_path):
        data = np.array([[[3, 255], [4, 5]]], dtype=np.uint8)
        ds = write_test_raster(tmp_path / "nd.tif", data, nodata=255.0)
        block = read_window(ds, (0, 0, 2, 2))
        assert math.isnan(block.data[0, 0, 1])
        assert block.data[0, 1, 1] == 5.0

    def test_window_across_tile_boundaries(self, tmp_path):
        # 300 px wide forces two 256-px tile columns.
        data = gradient_band(300, 300, scale=1000.0)[None]
        ds = write_test_raster(tmp_path / "big.tif", data)
        block = read_window(ds, (250, 250, 20, 20))
        expect = data[0, 250:270, 250:270]
        np.testing.assert_array_equal(block.data[0], expect)


class TestWriteRaster:
    def test_lossless_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        data = rng.normal(size=(4, 64, 64)).astype(np.float32)
        ds = write_test_raster(tmp_path / "rt.tif", data)
        back = read_window(ds, (0, 0, 64, 64))
        np.testing.assert_array_equal(back.data, data)

    def test_uncompressed_round_trip_is_larger(self, tmp_path):
        rng = np.random.default_rng(8)
        data = rng.normal(size=(2, 40, 40)).astype(np.float32)
        small = write_test_raster(tmp_path / "z.tif", data)
        big = write_test_raster(tmp_path / "raw.tif", data, compression="none")
        np.testing.assert_array_equal(read_window(big, (0, 0, 40, 40)).data, data)
        assert (tmp_path / "raw.tif").stat().st_size > \
            (tmp_path / "z.tif").stat().st_size
        assert small.sample_type == big.sample_type == "float32"

    def test_768_bands_accepted(self, tmp_path):
        data = np.arange(768 * 4 * 4, dtype=np.float32).reshape(768, 4, 4)
        ds = write_test_raster(tmp_path / "wide.tif", data)
        assert ds.band_count == 768
        np.testing.assert_array_equal(read_window(ds, (0, 0, 4, 4)).data, data)

    def test_deterministic_bytes(self, tmp_path):
        data = np.random.default_rng(3).normal(size=(3, 20, 20)).astype(np.float32)
        write_test_raster(tmp_path / "a.tif", data)
        write_test_raster(tmp_path / "b.tif", data)
        assert (tmp_path / "a.tif").read_bytes() == (tmp_path / "b.tif").read_bytes()

    def test_int16_round_trip(self, tmp_path):
        data = np.array([[[-5, 0], [3, -1]]], dtype=np.int16)
        ds = write_test_raster(tmp_path / "i16.tif", data, nodata=-1.0)
        assert ds.sample_type == "int16"
        block = read_window(ds, (0, 0, 2, 2))
        assert math.isnan(block.data[0, 1, 1])
        assert block.data[0, 0, 0] == -5.0

    def test_dimension_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="bands, height, width"):
            write_raster(tmp_path / "bad.tif",
                         np.zeros((4, 4), dtype=np.float32)[0], UTM_GT, CRS)


class TestGeoTransform:
    def test_origin_identity(self):
        assert UTM_GT.geo_of_pixel(0, 0) == (500_000.0, 4_200_000.0)

    def test_affine_by_hand(self):
        assert UTM_GT.geo_of_pixel(3, 2) == (500_030.0, 4_199_980.0)

    def test_floor_of_affine_inverse(self):
        assert UTM_GT.pixel_of_geo(500_035.0, 4_199_975.0) == (3, 2)

    def test_corner_assigned_by_floor(self):
        assert UTM_GT.pixel_of_geo(500_030.0, 4_199_980.0) == (3, 2)

    def test_round_trip_with_half_pixel_offset(self):
        for col in range(0, 30, 3):
            for row in range(0, 30, 3):
                x, y = UTM_GT.geo_of_pixel(col, row)
                got = UTM_GT.pixel_of_geo(x + UTM_GT.pixel_width / 2,
                                          y + UTM_GT.pixel_height / 2)
                assert got == (col, row)

    def test_point_outside_extent(self, gradient_raster):
        with pytest.raises(InputError, match="outside raster extent"):
            gradient_raster.pixel_for_point(499_000.0, 4_200_000.0)

    def test_zero_pixel_size_rejected(self):
        with pytest.raises(ValueError):
            GeoTransform(0, 0, 0.0, -10.0)

    def test_rotation_rejected_at_construction(self):
        with pytest.raises(InputError, match="rotated"):
            GeoTransform(0, 0, 10.0, -10.0, row_rotation=0.5)


class TestBandStats:
    def test_constant_band(self, tmp_path):
        ds = write_test_raster(tmp_path / "c.tif",
                               np.full((1, 10, 10), 5.0, dtype=np.float32))
        stats = compute_band_stats(ds, max_samples=1000, seed=0)
        assert stats.mean[0] == 5.0 and stats.std[0] == 0.0
        assert stats.minimum[0] == stats.maximum[0] == 5.0

    def test_two_valued_population_std(self, tmp_path):
        band = np.zeros((10, 10), dtype=np.float32)
        band[:, 5:] = 10.0
        ds = write_test_raster(tmp_path / "tv.tif", band[None])
        stats = compute_band_stats(ds, max_samples=1000, seed=0)
        assert stats.mean[0] == pytest.approx(5.0)
        assert stats.std[0] == pytest.approx(5.0)  # divide by n, not n-1

    def test_same_seed_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = write_test_raster(tmp_path / "r.tif",
                               rng.normal(size=(2, 40, 40)).astype(np.float32))
        a = compute_band_stats(ds, max_samples=100, seed=9)
        b = compute_band_stats(ds, max_samples=100, seed=9)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.std, b.std)

    def test_full_sampling_matches_brute_force(self, tmp_path):
        rng = np.random.default_rng(1)
        data = rng.normal(size=(3, 30, 30)).astype(np.float32)
        data[0, :3, :3] = np.nan
        ds = write_test_raster(tmp_path / "bf.tif", data)
        stats = compute_band_stats(ds, max_samples=10_000, seed=0)
        for b in range(3):
            vals = data[b][np.isfinite(data[b])].astype(np.float64)
            assert stats.mean[b] == pytest.approx(vals.mean(), rel=1e-6)
            assert stats.std[b] == pytest.approx(vals.std(), rel=1e-6)

    def test_band_entirely_nodata(self, tmp_path):
        data = np.full((1, 5, 5), np.nan, dtype=np.float32)
        ds = write_test_raster(tmp_path / "nan.tif", data)
        with pytest.raises(InputError, match="entirely nodata"):
            compute_band_stats(ds, max_samples=100, seed=0)

    def test_max_samples_minimum(self, gradient_raster):
        with pytest.raises(ValueError):
            compute_band_stats(gradient_raster, max_samples=1, seed=0)


class TestReadPoints:
    def test_two_points_with_properties(self, tmp_path):
        p = write_points_file(tmp_path / "pts.geojson",
                              [(1.0, 2.0, {"label": "tree"}),
                               (3.0, 4.0, {"label": "roof", "fold": 2})])
        col = read_points(p)
        assert len(col) == 2
        assert col.points[0].properties["label"] == "tree"
        assert col.points[1].properties["fold"] == 2
        assert col.crs_id is None

    def test_polygon_rejected(self, tmp_path):
        doc = {"type": "FeatureCollection", "features": [{
            "type": "Feature",
            "geometry": {"type": "Polygon",
                         "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 0]]]},
            "properties": {},
        }]}
        p = tmp_path / "poly.geojson"
        p.write_text(json.dumps(doc))
        with pytest.raises(InputError, match="points only"):
            read_points(p)

    def test_empty_collection(self, tmp_path):
        p = write_points_file(tmp_path / "empty.geojson", [])
        assert len(read_points(p)) == 0

    def test_malformed_file(self, tmp_path):
        p = tmp_path / "bad.geojson"
        p.write_text("{not json")
        with pytest.raises(InputError, match="malformed"):
            read_points(p)

    def test_crs_member_parsed_and_checked(self, tmp_path):
        p = write_points_file(tmp_path / "crs.geojson", [(0.0, 0.0, {})],
                              crs="urn:ogc:def:crs:EPSG::32633")
        col = read_points(p)
        assert col.crs_id == "EPSG:32633"
        col.check_crs("EPSG:32633")
        with pytest.raises(InputError, match="does not match"):
            col.check_crs("EPSG:4326")


class TestForeignLayouts:
    """The reader also accepts stripped, pixel-interleaved files."""

    def _write_stripped_chunky(self, path, band_a, band_b):
        h, w = band_a.shape
        interleaved = np.stack([band_a, band_b], axis=-1).astype("<u1")
        payload = interleaved.tobytes()
        n_entries = 12
        extra_off = 8 + 2 + 12 * n_entries + 4
        strip_off = extra_off + 24 + 48  # after the two double arrays
        entries = [
            (256, 4, 1, w), (257, 4, 1, h), (258, 3, 2, None),
            (259, 3, 1, 1), (262, 3, 1, 1), (273, 4, 1, strip_off),
            (277, 3, 1, 2), (278, 4, 1, h), (279, 4, 1, len(payload)),
            (284, 3, 1, 1), (33550, 12, 3, None), (33922, 12, 6, None),
        ]
        assert len(entries) == n_entries
        buf = struct.pack("<2sHI", b"II", 42, 8)
        buf += struct.pack("<H", n_entries)
        extra = b""
        body = b""
        for tag, typ, count, val in entries:
            buf += struct.pack("<HHI", tag, typ, count)
            if tag == 258:
                buf += struct.pack("<HH", 8, 8)
            elif tag == 33550:
                buf += struct.pack("<I", extra_off + len(extra))
                extra += struct.pack("<3d", 10.0, 10.0, 0.0)
            elif tag == 33922:
                buf += struct.pack("<I", extra_off + len(extra))
                extra += struct.pack("<6d", 0, 0, 0, 500_000.0, 4_200_000.0, 0)
            elif typ == 3:
                buf += struct.pack("<HH", val, 0)
            else:
                buf += struct.pack("<I", val)
        buf += struct.pack("<I", 0)
        assert len(buf) + len(extra) == extra_off + len(extra)
        path.write_bytes(buf + extra + payload)

    def test_read_stripped_chunky(self, tmp_path):
        a = np.arange(12, dtype=np.uint8).reshape(3, 4)
        b = a + 100
        p = tmp_path / "foreign.tif"
        self._write_stripped_chunky(p, a, b)
        ds = open_raster(p)
        assert ds.band_count == 2 and ds.sample_type == "uint8"
        block = read_window(ds, (1, 1, 2, 2))
        np.testing.assert_array_equal(block.data[0], a[1:3, 1:3])
        np.testing.assert_array_equal(block.data[1], b[1:3, 1:3])
