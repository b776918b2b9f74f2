import math

import numpy as np
import pytest

from ldofkit import DataError, Dataset, Ranking, TrialSpec, mix_outliers, precision, run_protocol, subsample_normals, sweep_k
from ldofkit.core import OutlierScore
from ldofkit.evaluation import SweepReport, paired_t, run_seed, verify_lower_bound, verify_false_detection
from ldofkit.theory import false_detection_bound


def ranking(ids, n=None):
    entries = tuple(OutlierScore(i, 1.0) for i in ids)
    return Ranking("x", len(ids) if n is None else n, 2, entries)


class TestPrecision:
    def test_basic(self):
        assert precision(ranking([1, 2, 3, 4]), {1, 2, 3, 4}) == 1.0
        assert precision(ranking([5, 6, 7, 8]), {1, 2, 3, 4}) == 0.0
        assert precision(ranking(list(range(10))), set(range(8)) | {20, 21}) == 0.8

    def test_short_ranking_counts_misses(self):
        assert precision(ranking([1, 2], n=4), {1, 2, 3, 4}) == 0.5

    def test_permutation_invariant(self):
        rng = np.random.default_rng(0)
        ids = list(range(10))
        base = precision(ranking(ids), {0, 3, 11})
        for _ in range(20):
            assert precision(ranking(list(rng.permutation(ids))), {0, 3, 11}) == base

    def test_empty_truth(self):
        with pytest.raises(DataError):
            precision(ranking([1]), set())


class TestTrialSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrialSpec(k_range=(5, 4))
        with pytest.raises(ValueError):
            TrialSpec(runs=0)
        with pytest.raises(ValueError):
            TrialSpec(methods=("ldof", "svm"))
        assert TrialSpec(k_range=(3, 5)).ks == (3, 4, 5)


class TestSweep:
    def test_scene(self, scene):
        rep = sweep_k(scene, {210, 211, 212, 213}, TrialSpec(k_range=(2, 50), n=4))
        assert np.all(rep.row("ldof")[18:] == 1.0)
        assert np.all(rep.row("knn")[13:] == 0.0)
        assert rep.audit.clean and rep.audit.cells == 49

    def test_deterministic_runs(self, scene):
        trial = TrialSpec(k_range=(10, 14), n=4, runs=2)
        a = sweep_k(scene, {210, 211, 212, 213}, trial)
        assert a.equals(sweep_k(scene, {210, 211, 212, 213}, trial))
        np.testing.assert_array_equal(a.precision[:, :, 0], a.precision[:, :, 1])
        assert np.all(np.array([a.std(m, k) for m in a.methods for k in a.ks]) == 0)

    def test_single_method_matches_all(self, scene):
        truth = {210, 211, 212, 213}
        full = sweep_k(scene, truth, TrialSpec(k_range=(5, 25), n=4))
        for m in ("ldof", "knn", "lof"):
            one = sweep_k(scene, truth, TrialSpec(methods=(m,), k_range=(5, 25), n=4))
            np.testing.assert_array_equal(one.row(m), full.row(m))

    def test_missing_cells_have_reasons(self):
        ds = Dataset(np.random.default_rng(1).normal(size=(8, 2)))
        rep = sweep_k(ds, {0}, TrialSpec(k_range=(1, 9), n=1))
        assert math.isnan(rep.mean("ldof", 1)) and "k >= 2" in rep.reasons[("ldof", 1, 0)]
        assert math.isnan(rep.mean("knn", 8)) and "N-1" in rep.reasons[("knn", 8, 0)]
        assert not math.isnan(rep.mean("lof", 7))

    def test_cell_bounds(self, scene):
        rep = run_protocol(
            TrialSpec(k_range=(5, 12), n=4, runs=3, seed=2),
            lambda run, seed: (subsample_normals(scene, 150, seed), {0}),
        )
        means = np.array([rep.mean(m, k) for m in rep.methods for k in rep.ks])
        stds = np.array([rep.std(m, k) for m in rep.methods for k in rep.ks])
        assert np.all((means >= 0) & (means <= 1)) and np.all((stds >= 0) & (stds <= 0.5))

    def test_serialization_roundtrip(self, scene, tmp_path):
        rep = sweep_k(scene, {210, 211}, TrialSpec(k_range=(1, 6), n=2, runs=2))
        rep.to_json(tmp_path / "r.json")
        again = SweepReport.from_json(tmp_path / "r.json")
        assert again.equals(rep)
        rep.to_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "row_type,method,k,run,precision,std,reason"
        assert sum(line.startswith("cell,") for line in lines) == 3 * 6 * 2
        assert sum(line.startswith("aggregate,") for line in lines) == 3 * 6

    def test_pooled(self):
        p = np.array([[[1.0, 0.0], [0.5, np.nan]]])
        rep = SweepReport(("ldof",), (3, 4), p)
        mean, std = rep.pooled("ldof")
        assert mean == pytest.approx(0.5) and std == pytest.approx(np.std([1.0, 0.0, 0.5]))
        assert rep.pooled("ldof", 4, 4) == (0.5, 0.0)
        np.testing.assert_array_equal(rep.run_means("ldof"), [0.75, 0.0])


class TestProtocol:
    def test_run_seed_independent_of_order(self):
        assert run_seed(5, 3) == run_seed(5, 3)
        assert len({run_seed(5, r) for r in range(100)}) == 100

    def test_replay_single_run(self, scene):
        normal = scene.subset(range(210))
        pool = scene.subset(range(210, 214))
        trial = TrialSpec(k_range=(10, 12), n=2, runs=4, seed=9)
        make = lambda run, seed: mix_outliers(normal, pool, 2, "random", seed)  # noqa: E731
        rep = run_protocol(trial, make)
        assert rep.meta["run_seeds"] == [run_seed(9, r) for r in range(4)]
        ds, truth = make(2, run_seed(9, 2))
        alone = sweep_k(ds, truth, TrialSpec(k_range=(10, 12), n=2))
        np.testing.assert_array_equal(alone.precision[:, :, 0], rep.precision[:, :, 2])

    def test_paired_t(self):
        a, b = [0.5, 0.6, 0.7, 0.9], [0.4, 0.4, 0.6, 0.5]
        t, p = paired_t(a, b)
        diff = np.subtract(a, b)
        assert t == pytest.approx(diff.mean() / (diff.std(ddof=1) / 2), rel=1e-12)
        assert 0 < p < 1
        with pytest.raises(ValueError):
            paired_t([1.0], [2.0])


class TestMixing:
    def setup_method(self):
        self.normal = Dataset(np.zeros((357, 2)), ["B"] * 357)
        self.pool = Dataset(np.arange(40.0).reshape(20, 2), ["M"] * 20, source_ids=range(100, 120))

    def test_first(self):
        ds, truth = mix_outliers(self.normal, self.pool, 10)
        assert ds.size == 367 and truth == set(range(357, 367))
        assert ds.source_ids[357:] == tuple(range(100, 110))
        np.testing.assert_array_equal(ds.features[357:], self.pool.features[:10])

    def test_zero(self):
        ds, truth = mix_outliers(self.normal, self.pool, 0)
        assert ds is self.normal and truth == set()

    def test_random(self):
        a, ta = mix_outliers(self.normal, self.pool, 5, "random", seed=1)
        b, tb = mix_outliers(self.normal, self.pool, 5, "random", seed=2)
        assert len(ta) == len(tb) == 5
        assert not np.array_equal(a.features[357:], b.features[357:])
        assert a.equals(mix_outliers(self.normal, self.pool, 5, "random", seed=1)[0])

    def test_too_many(self):
        with pytest.raises(DataError):
            mix_outliers(self.normal, self.pool, 21)

    def test_subsample(self):
        ds = Dataset(np.arange(100.0)[:, None])
        a = subsample_normals(ds, 10, seed=3)
        assert a.size == 10 and len(set(a.source_ids)) == 10
        assert a.equals(subsample_normals(ds, 10, seed=3))
        assert not a.equals(subsample_normals(ds, 10, seed=4))
        with pytest.raises(DataError):
            subsample_normals(ds, 101, seed=0)


class TestBoundChecks:
    def test_lower_bound_d3(self):
        r = verify_lower_bound(3, 100, 5000, 50, seed=1)
        assert 0.45 <= r.mean <= 0.55 and r.passed

    def test_lower_bound_d1(self):
        assert 0.45 <= verify_lower_bound(1, 100, 5000, 50, seed=2).mean <= 0.55

    def test_degenerate_smoke(self):
        r = verify_lower_bound(2, 2, 3, 3, seed=3)
        assert all(np.isfinite(r.values))

    def test_euclidean_center_is_higher(self):
        # The 1/2 limit is a squared-distance fact; plain distances sit well above it.
        assert verify_lower_bound(3, 100, 5000, 10, seed=4, metric="euclidean").mean > 0.6

    def test_false_detection(self):
        r = verify_false_detection(5, 60, 1.0, 10_000, seed=5)
        assert r.frequency <= r.bound and not r.violated
        assert r.bound == false_detection_bound(60, 5, 1.0)

    def test_extreme_threshold(self):
        for k in (10, 40):
            assert verify_false_detection(3, k, 3.0, 2000, seed=k).exceedances == 0

    def test_preconditions(self):
        with pytest.raises(ValueError):
            verify_false_detection(3, 10, 0.5, 10)
        with pytest.raises(ValueError):
            verify_false_detection(3, 2, 1.0, 10)
        with pytest.raises(ValueError):
            verify_lower_bound(3, 11, 10, 1)
