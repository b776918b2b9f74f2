"""Local distance-based outlier factor and the top-n LDOF detector.

For a record x_p with k nearest neighbors N_p:

    knn_dist        mean distance from x_p to the members of N_p
    knn_inner_dist  mean distance over distinct pairs inside N_p
    LDOF            knn_dist / knn_inner_dist

Records scoring below the lower bound 1/2 lie inside a locally uniform
cloud and are dropped before ranking.
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .core import DataError, Dataset, Metric, NeighborSet, OutlierScore, Ranking, ScoreTable, from_squared, squared_distances
from .neighbors import Backend, NeighborIndex, build_index, k_nearest, run_blocks
from .theory import ldof_lower_bound

_PAIR_BUDGET = 1 << 22


def _prefix_sums(X: np.ndarray, ids: np.ndarray, dists: np.ndarray, metric: Metric):
    """Cumulative neighbor-distance and inner-pair sums over neighbor prefixes.

    Returns ``(outer, inner)`` of shape (B, m): ``outer[:, j]`` sums the
    distances to the first j+1 neighbors and ``inner[:, j]`` sums the
    distances over unordered pairs among them. Pairs are added column by
    column, so the sums for a prefix of length k are bit-identical to the
    sums computed from a k-neighbor query alone.
    """
    outer = np.cumsum(dists, axis=1)
    A = X[ids]
    pair = from_squared(metric, squared_distances(A[:, None, :, :], A[:, :, None, :]))
    m = ids.shape[1]
    col = np.zeros(ids.shape, dtype=np.float64)
    for i in range(m - 1):
        col[:, i + 1 :] += pair[:, i, i + 1 :]
    return outer, np.cumsum(col, axis=1)


def _ratio(knn_dist: np.ndarray, inner: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        score = knn_dist / inner
    degenerate = inner == 0
    score[degenerate] = np.where(knn_dist[degenerate] > 0, np.inf, 0.0)
    return score


def ldof_tables(
    index: NeighborIndex,
    ks: Iterable[int],
    neighbors: Optional[tuple[np.ndarray, np.ndarray]] = None,
    threads: Optional[int] = None,
) -> dict[int, ScoreTable]:
    """LDOF score tables for several neighborhood sizes from one k-NN pass."""
    ks = sorted({int(k) for k in ks})
    if not ks:
        return {}
    if ks[0] < 2:
        raise ValueError("LDOF needs k >= 2")
    n = index.size
    if ks[-1] >= n:
        raise DataError(f"k={ks[-1]} needs more than {ks[-1]} records, dataset has {n}; choose a smaller k")
    if neighbors is None:
        neighbors = index.query_all(ks[-1], threads)
    ids, dists = neighbors
    kmax = ks[-1]
    ids, dists = ids[:, :kmax], dists[:, :kmax]
    cols = np.array(ks) - 1
    out_knn = np.empty((n, len(ks)))
    out_inner = np.empty((n, len(ks)))
    X = index.dataset.features

    def work(lo, hi):
        outer, inner = _prefix_sums(X, ids[lo:hi], dists[lo:hi], index.metric)
        out_knn[lo:hi] = outer[:, cols]
        out_inner[lo:hi] = inner[:, cols]

    run_blocks(work, n, max(1, _PAIR_BUDGET // (kmax * kmax)), threads)
    lb = ldof_lower_bound()
    tables = {}
    for j, k in enumerate(ks):
        knn_dist = out_knn[:, j] / k
        inner = out_inner[:, j] / (k * (k - 1) / 2)
        score = _ratio(knn_dist, inner)
        tables[k] = ScoreTable("ldof", k, score, knn_dist, inner, score < lb)
    return tables


def _neighbor_arrays(dataset: Dataset, neighbor_set: NeighborSet, metric: Metric):
    ids = np.asarray(neighbor_set.ids, dtype=np.int64)
    if neighbor_set.query_id in set(neighbor_set.ids):
        raise DataError("neighbor set contains its own query record")
    X = dataset.features
    d = from_squared(metric, squared_distances(X[ids], X[neighbor_set.query_id]))
    return ids[None, :], d[None, :]


def knn_distance(dataset: Dataset, neighbor_set: NeighborSet, metric: "Metric | str" = Metric.EUCLIDEAN) -> float:
    """Mean distance from the query record to its neighbors."""
    metric = Metric.parse(metric)
    if len(neighbor_set) == 0:
        raise DataError("neighbor set is empty")
    ids, d = _neighbor_arrays(dataset, neighbor_set, metric)
    return float(np.cumsum(d, axis=1)[0, -1] / d.shape[1])


def knn_inner_distance(dataset: Dataset, neighbor_set: NeighborSet, metric: "Metric | str" = Metric.EUCLIDEAN) -> float:
    """Mean pairwise distance among the neighbors (query excluded)."""
    metric = Metric.parse(metric)
    m = len(neighbor_set)
    if m < 2:
        raise DataError(f"inner distance needs at least 2 neighbors, got {m}")
    ids, d = _neighbor_arrays(dataset, neighbor_set, metric)
    _, inner = _prefix_sums(dataset.features, ids, d, metric)
    return float(inner[0, -1] / (m * (m - 1) / 2))


def ldof_score(
    dataset: Dataset,
    record_id: int,
    k: int,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    index: Optional[NeighborIndex] = None,
) -> OutlierScore:
    metric = Metric.parse(metric)
    if k < 2:
        raise ValueError("LDOF needs k >= 2")
    if index is None:
        index = build_index(dataset, metric, Backend.BRUTE_FORCE)
    elif index.metric is not metric:
        raise ValueError(f"index metric {index.metric.value} differs from {metric.value}")
    nbrs = k_nearest(index, record_id, k)
    m = len(nbrs)
    if m < 2:
        raise DataError("LDOF needs at least 2 neighbors; dataset has fewer than 3 records")
    ids = np.asarray(nbrs.ids, dtype=np.int64)[None, :]
    d = np.asarray(nbrs.distances)[None, :]
    outer, inner = _prefix_sums(dataset.features, ids, d, metric)
    knn_dist = outer[:, -1] / m
    inner_dist = inner[:, -1] / (m * (m - 1) / 2)
    score = float(_ratio(knn_dist, inner_dist)[0])
    return OutlierScore(int(record_id), score, float(knn_dist[0]), float(inner_dist[0]), score < ldof_lower_bound())


def _check_topn(dataset: Dataset, n: int, k: int, min_k: int = 1) -> None:
    if n < 1:
        raise ValueError("n must be at least 1")
    if k < min_k:
        raise ValueError(f"k must be at least {min_k}")
    if dataset.size <= k:
        raise DataError(
            f"k={k} needs at least {k + 1} records, dataset has {dataset.size}; choose k <= {dataset.size - 1}"
        )


def top_n_ldof(
    dataset: Dataset,
    n: int,
    k: int,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    backend: "Backend | str" = Backend.TREE,
    prune: bool = True,
    threads: Optional[int] = None,
    index: Optional[NeighborIndex] = None,
) -> Ranking:
    """The n records with the highest LDOF.

    Records below the lower bound are discarded, so the ranking may be
    shorter than n. ``prune=False`` ranks every record instead.
    """
    _check_topn(dataset, n, k, min_k=2)
    if index is None:
        index = build_index(dataset, metric, backend)
    table = ldof_tables(index, [k], threads=threads)[k]
    return Ranking.from_table(table, n, drop_pruned=prune)


def default_k(dimension: int) -> int:
    """At least d+1 neighbors are needed to surround a point; never fewer than 10."""
    return max(dimension + 1, 10)

