import math

import numpy as np
import pytest

from ldofkit import DataError, Dataset, Metric, Record, distance
from ldofkit.core import ScoreTable, Ranking, squared_distances


class TestDistance:
    def test_known_values(self):
        assert distance("euclidean", [0, 0], [3, 4]) == 5.0
        assert distance("squared_euclidean", [0, 0], [3, 4]) == 25.0
        assert distance(Metric.EUCLIDEAN, [1.5, -2.0], [1.5, -2.0]) == 0.0

    def test_axioms_on_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            d = int(rng.integers(1, 8))
            x, y, z = rng.normal(size=(3, d)) * rng.uniform(0.1, 100)
            for m in Metric:
                assert distance(m, x, y) == distance(m, y, x)
                assert distance(m, x, y) >= 0
            assert distance("squared_euclidean", x, y) == pytest.approx(distance("euclidean", x, y) ** 2, rel=1e-14)
            lhs = distance("euclidean", x, z)
            assert lhs <= (distance("euclidean", x, y) + distance("euclidean", y, z)) * (1 + 1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            distance("euclidean", [0, 0], [1, 2, 3])

    def test_non_finite(self):
        with pytest.raises(DataError):
            distance("euclidean", [0, math.nan], [1, 2])

    def test_unknown_metric(self):
        with pytest.raises(ValueError, match="unknown metric"):
            Metric.parse("manhattan")

    def test_kernel_independent_of_batch_shape(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 7))
        full = squared_distances(X[None, :, :], X[:, None, :])
        for i in range(40):
            np.testing.assert_array_equal(full[i], squared_distances(X, X[i]))


class TestDataset:
    def test_rejects_nan_and_inf(self):
        with pytest.raises(DataError):
            Dataset(np.array([[0.0, np.nan]]))
        with pytest.raises(DataError):
            Dataset.from_rows([[0.0], [np.inf]])

    def test_rejects_ragged(self):
        with pytest.raises(DataError, match="ragged"):
            Dataset.from_rows([[0, 1], [2]])

    def test_rejects_label_count(self):
        with pytest.raises(DataError):
            Dataset.from_rows([[0], [1]], labels=["a"])

    def test_immutable(self):
        ds = Dataset.from_rows([[0, 1], [2, 3]])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 5.0

    def test_copies_input(self):
        X = np.zeros((3, 2))
        ds = Dataset(X)
        X[0, 0] = 1.0
        assert ds.features[0, 0] == 0.0

    def test_records_roundtrip(self):
        recs = [Record(0, (1.0, 2.0), "a"), Record(1, (3.0, 4.0), "b")]
        ds = Dataset.from_records(recs)
        assert ds.records == tuple(recs)
        assert ds.size == 2 and ds.dimension == 2 and len(ds) == 2

    def test_record_ids_must_be_sequential(self):
        with pytest.raises(DataError):
            Dataset.from_records([Record(1, (0.0,))])

    def test_subset_keeps_source_ids(self):
        ds = Dataset.from_rows([[0], [1], [2], [3]], labels="abcd", source_ids=(10, 11, 12, 13))
        sub = ds.subset([3, 1])
        assert sub.source_ids == (13, 11)
        assert sub.labels == ("d", "b")
        np.testing.assert_array_equal(sub.features[:, 0], [3, 1])

    def test_unknown_record(self):
        with pytest.raises(KeyError):
            Dataset.from_rows([[0]]).record(1)


class TestRanking:
    def test_order_descending_ties_by_id(self):
        table = ScoreTable("x", 2, np.array([1.0, 3.0, 1.0, 3.0, 2.0]))
        np.testing.assert_array_equal(table.order(), [1, 3, 4, 0, 2])

    def test_pruned_entries_dropped(self):
        table = ScoreTable("ldof", 2, np.array([0.4, 0.9, 0.6]), pruned=np.array([True, False, False]))
        r = Ranking.from_table(table, 3)
        assert r.ids == [1, 2]
        assert Ranking.from_table(table, 3, drop_pruned=False).ids == [1, 2, 0]

    def test_infinite_scores_rank_first(self):
        table = ScoreTable("x", 2, np.array([1.0, np.inf, 0.0]))
        assert Ranking.from_table(table, 1).ids == [1]
