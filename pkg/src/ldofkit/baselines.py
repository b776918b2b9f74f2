"""Comparison detectors: top-n k-distance (KNN) and top-n LOF.

LOF follows the usual reachability formulation with exactly ``min_pts``
neighbors per record (ties at the boundary resolved by record id, as in
:mod:`ldofkit.neighbors`):

    reach(p, o) = max(k_distance(o), dist(p, o))
    lrd(p)      = 1 / mean_o reach(p, o)
    LOF(p)      = mean_o lrd(o) / lrd(p)
"""

from __future__ import annotations

from typing import Iterable, Optional

import numpy as np

from .core import DataError, Dataset, Metric, Ranking, ScoreTable
from .ldof import _check_topn
from .neighbors import Backend, NeighborIndex, build_index


def _rowsum(a: np.ndarray) -> np.ndarray:
    # Sequential per-row sum; independent of how rows are batched.
    return np.cumsum(a, axis=1)[:, -1]


def _need(index: NeighborIndex, k: int) -> None:
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > index.size - 1:
        raise DataError(f"k={k} exceeds N-1={index.size - 1}; choose a smaller k")


def k_distance(
    dataset: Dataset,
    record_id: int,
    k: int,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    index: Optional[NeighborIndex] = None,
) -> float:
    """Distance from a record to its k-th nearest neighbor."""
    if index is None:
        index = build_index(dataset, metric, Backend.BRUTE_FORCE)
    _need(index, k)
    _, d = index.query(record_id, k)
    return float(d[-1])


def knn_tables(dists: np.ndarray, ks: Iterable[int]) -> dict[int, ScoreTable]:
    """k-distance tables from neighbor distances sorted ascending per row."""
    return {k: ScoreTable("knn", k, dists[:, k - 1].copy()) for k in ks}


def lof_from_neighbors(ids: np.ndarray, dists: np.ndarray, min_pts: int) -> np.ndarray:
    ids = ids[:, :min_pts]
    dists = dists[:, :min_pts]
    kdist = dists[:, -1]
    reach = np.maximum(kdist[ids], dists)
    mean_reach = _rowsum(reach) / min_pts
    with np.errstate(divide="ignore"):
        lrd = np.where(mean_reach > 0, 1.0 / mean_reach, np.inf)
    nb = lrd[ids]
    with np.errstate(invalid="ignore"):
        lof = _rowsum(nb) / min_pts / lrd
    dup = np.isinf(lrd)
    if dup.any():
        # Coincident points: compare densities neighbor by neighbor, counting
        # an infinite density matched by an infinite density as ratio 1.
        ratios = np.where(np.isinf(nb[dup]), 1.0, 0.0)
        lof[dup] = _rowsum(ratios) / min_pts
    return lof


def lof_tables(ids: np.ndarray, dists: np.ndarray, ks: Iterable[int]) -> dict[int, ScoreTable]:
    return {k: ScoreTable("lof", k, lof_from_neighbors(ids, dists, k)) for k in ks}


def lof_score(
    dataset: Dataset,
    record_id: int,
    min_pts: int,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    index: Optional[NeighborIndex] = None,
) -> float:
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    if index is None:
        index = build_index(dataset, metric, Backend.BRUTE_FORCE)
    _need(index, min_pts)
    if not 0 <= record_id < index.size:
        raise KeyError(f"unknown record id {record_id!r}")
    ids, dists = index.query_all(min_pts, threads=1)
    return float(lof_from_neighbors(ids, dists, min_pts)[record_id])


def top_n_knn(
    dataset: Dataset,
    n: int,
    k: int,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    backend: "Backend | str" = Backend.TREE,
    threads: Optional[int] = None,
    index: Optional[NeighborIndex] = None,
) -> Ranking:
    _check_topn(dataset, n, k)
    if index is None:
        index = build_index(dataset, metric, backend)
    _, dists = index.query_all(k, threads)
    return Ranking.from_table(knn_tables(dists, [k])[k], n)


def top_n_lof(
    dataset: Dataset,
    n: int,
    min_pts: int,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    backend: "Backend | str" = Backend.TREE,
    threads: Optional[int] = None,
    index: Optional[NeighborIndex] = None,
) -> Ranking:
    _check_topn(dataset, n, min_pts)
    if index is None:
        index = build_index(dataset, metric, backend)
    ids, dists = index.query_all(min_pts, threads)
    return Ranking.from_table(lof_tables(ids, dists, [min_pts])[min_pts], n)
