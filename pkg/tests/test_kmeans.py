"""K-means: brute-force optimum on small fixtures, Lloyd monotonicity."""

from __future__ import annotations

import numpy as np
import pytest

from geodeep.analysis import (
    CLUSTER_NODATA,
    KMeansModel,
    fit_kmeans,
    predict_kmeans,
)
from geodeep.raster import read_window

from conftest import write_test_raster
from oracles import kmeans_brute_force

FOUR_POINTS = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])


class TestFitKmeans:
    def test_k1_is_mean_and_total_variance(self):
        x = np.random.default_rng(0).normal(size=(50, 3))
        model = fit_kmeans(x, k=1, seed=0)
        np.testing.assert_allclose(model.centroids[0], x.mean(axis=0),
                                   atol=1e-9)
        expected = float(((x - x.mean(axis=0)) ** 2).sum())
        assert model.inertia == pytest.approx(expected)

    def test_four_point_fixture_brute_force(self):
        model = fit_kmeans(FOUR_POINTS, k=2, seed=0)
        best_inertia, _, best_centroids = kmeans_brute_force(
            [tuple(p) for p in FOUR_POINTS], 2)
        assert best_inertia == pytest.approx(1.0)
        assert model.inertia == pytest.approx(1.0)
        got = sorted(map(tuple, model.centroids))
        want = sorted(best_centroids)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_k_equals_n_zero_inertia(self):
        x = np.array([[0.0], [1.0], [2.0], [5.0]])
        model = fit_kmeans(x, k=4, seed=1)
        assert model.inertia == pytest.approx(0.0, abs=1e-18)

    def test_inertia_non_increasing_on_random_fixtures(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            n = int(rng.integers(8, 40))
            d = int(rng.integers(1, 5))
            k = int(rng.integers(1, min(n, 6)))
            x = rng.normal(size=(n, d))
            model = fit_kmeans(x, k=k, seed=trial)
            hist = model.inertia_history
            assert all(a >= b - 1e-9 for a, b in zip(hist, hist[1:])), \
                f"trial {trial}"

    def test_final_assignment_is_fixed_point(self):
        x = np.random.default_rng(9).normal(size=(60, 2))
        model = fit_kmeans(x, k=4, seed=2)
        d2 = ((x[:, None, :] - model.centroids[None]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        recomputed = np.stack([x[assign == j].mean(axis=0)
                               for j in range(4)])
        np.testing.assert_allclose(recomputed, model.centroids, atol=1e-6)

    def test_deterministic_for_seed(self):
        x = np.random.default_rng(10).normal(size=(100, 4))
        a = fit_kmeans(x, k=5, seed=3)
        b = fit_kmeans(x, k=5, seed=3)
        assert a.centroids.tobytes() == b.centroids.tobytes()
        assert a.inertia == b.inertia

    def test_duplicate_points_do_not_crash(self):
        x = np.zeros((6, 2))
        model = fit_kmeans(x, k=3, seed=0)
        assert model.inertia == 0.0

    def test_k_out_of_range(self):
        x = np.zeros((3, 2))
        with pytest.raises(ValueError, match="out of range"):
            fit_kmeans(x, k=4, seed=0)
        with pytest.raises(ValueError, match="out of range"):
            fit_kmeans(x, k=0, seed=0)

    def test_json_round_trip(self):
        x = np.random.default_rng(11).normal(size=(30, 3))
        model = fit_kmeans(x, k=3, seed=4)
        back = KMeansModel.from_json_dict(model.to_json_dict())
        np.testing.assert_array_equal(back.centroids, model.centroids)
        assert back.k == 3 and back.seed == 4


class TestPredictKmeans:
    def test_cluster_raster(self, tmp_path):
        data = np.zeros((2, 4, 4), dtype=np.float32)
        data[:, :, 2:] = 10.0
        data[:, 3, 3] = np.nan
        ds = write_test_raster(tmp_path / "f.tif", data)
        model = KMeansModel(k=2,
                            centroids=np.array([[0.0, 0.0], [10.0, 10.0]]),
                            inertia=0.0, seed=0)
        out = predict_kmeans(ds, model, tmp_path / "clusters.tif")
        assert out.band_count == 1 and out.sample_type == "int16"
        block = read_window(out, (0, 0, 4, 4))
        assert block.data[0, 0, 0] == 0.0
        assert block.data[0, 0, 3] == 1.0
        assert np.isnan(block.data[0, 3, 3])  # nodata sentinel -> NaN

    def test_tie_goes_to_lowest_index(self, tmp_path):
        data = np.full((1, 1, 1), 5.0, dtype=np.float32)
        ds = write_test_raster(tmp_path / "t.tif", data)
        model = KMeansModel(k=2, centroids=np.array([[0.0], [10.0]]),
                            inertia=0.0, seed=0)
        out = predict_kmeans(ds, model, tmp_path / "tie.tif")
        assert read_window(out, (0, 0, 1, 1)).data[0, 0, 0] == 0.0

    def test_dimension_mismatch(self, tmp_path, feature_raster_8x8):
        model = KMeansModel(k=1, centroids=np.zeros((1, 2)), inertia=0.0,
                            seed=0)
        with pytest.raises(ValueError, match="bands"):
            predict_kmeans(feature_raster_8x8, model, tmp_path / "x.tif")

    def test_nodata_constant(self):
        assert CLUSTER_NODATA == -1
