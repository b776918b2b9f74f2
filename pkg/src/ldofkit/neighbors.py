"""k-nearest-neighbor queries: brute-force scan and a kd-tree index.

Both backends order neighbors by (distance, id) and compute distances with
:func:`ldofkit.core.squared_distances`, so their answers agree exactly,
including ties at the k-th rank.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import DataError, Dataset, Metric, NeighborSet, from_squared, squared_distances

DEFAULT_LEAF_SIZE = 24
# Above this dimension the tree answers queries by scanning.
TREE_MAX_DIMENSION = 16


class Backend(str, enum.Enum):
    BRUTE_FORCE = "brute_force"
    TREE = "tree"

    @classmethod
    def parse(cls, value: "Backend | str") -> "Backend":
        if isinstance(value, cls):
            return value
        value = str(value).lower().replace("-", "_")
        aliases = {"brute": cls.BRUTE_FORCE, "kdtree": cls.TREE, "kd_tree": cls.TREE}
        if value in aliases:
            return aliases[value]
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown backend {value!r}; expected brute_force or tree") from None


def _smallest(dist: np.ndarray, m: int) -> np.ndarray:
    """Positions of the m smallest entries of ``dist``, ordered by (value, position)."""
    if m < len(dist):
        part = np.argpartition(dist, m - 1)[:m]
        cand = np.flatnonzero(dist <= dist[part].max())
    else:
        cand = np.arange(len(dist))
    return cand[np.lexsort((cand, dist[cand]))[:m]]


class KDTree:
    """Static kd-tree over the rows of ``points`` with bucketed leaves.

    Nodes split at the median of their widest coordinate. Points equal to
    the split value may fall on either side; the search bound only relies on
    left points being <= split and right points being >= split.
    """

    def __init__(self, points: np.ndarray, leaf_size: int = DEFAULT_LEAF_SIZE):
        points = np.asarray(points, dtype=np.float64)
        if leaf_size < 1:
            raise ValueError("leaf_size must be positive")
        self.leaf_size = leaf_size
        n = points.shape[0]
        perm = np.arange(n)
        start, end, dim, split, left, right = [], [], [], [], [], []

        def new_node(lo, hi):
            start.append(lo)
            end.append(hi)
            dim.append(-1)
            split.append(0.0)
            left.append(-1)
            right.append(-1)
            return len(start) - 1

        stack = [new_node(0, n)]
        while stack:
            node = stack.pop()
            lo, hi = start[node], end[node]
            if hi - lo <= leaf_size:
                continue
            block = points[perm[lo:hi]]
            spread = block.max(axis=0) - block.min(axis=0)
            axis = int(np.argmax(spread))
            if spread[axis] == 0.0:
                continue  # all points coincide; keep as an oversized leaf
            mid = (hi - lo) // 2
            order = np.argpartition(block[:, axis], mid)
            perm[lo:hi] = perm[lo:hi][order]
            dim[node] = axis
            split[node] = float(points[perm[lo + mid], axis])
            left[node] = new_node(lo, lo + mid)
            right[node] = new_node(lo + mid, hi)
            stack.extend((left[node], right[node]))

        self.perm = perm
        self.points = np.ascontiguousarray(points[perm])
        self._start, self._end = start, end
        self._dim, self._split = dim, split
        self._left, self._right = left, right

    @property
    def node_count(self) -> int:
        return len(self._start)

    def query(self, q: np.ndarray, m: int, metric: Metric, exclude: int = -1):
        """The m nearest stored points to ``q`` as (ids, distances)."""
        q = np.asarray(q, dtype=np.float64)
        qs = q.tolist()
        best_d = np.full(m, np.inf)
        best_i = np.full(m, np.iinfo(np.int64).max, dtype=np.int64)
        worst = np.inf
        euclid = metric is Metric.EUCLIDEAN
        start, end, dim, split = self._start, self._end, self._dim, self._split
        left, right, perm, pts = self._left, self._right, self.perm, self.points
        stack = [(0, 0.0)]
        while stack:
            node, bound = stack.pop()
            if bound > worst:
                continue
            axis = dim[node]
            if axis < 0:
                lo, hi = start[node], end[node]
                ids = perm[lo:hi]
                d = from_squared(metric, squared_distances(pts[lo:hi], q))
                if exclude >= 0:
                    keep = ids != exclude
                    ids, d = ids[keep], d[keep]
                cd = np.concatenate((best_d, d))
                ci = np.concatenate((best_i, ids))
                o = np.lexsort((ci, cd))[:m]
                best_d, best_i = cd[o], ci[o]
                worst = best_d[-1]
                continue
            diff = qs[axis] - split[node]
            plane = diff * diff
            if euclid:
                plane = math.sqrt(plane)
            far_bound = plane if plane > bound else bound
            if diff < 0:
                near, far = left[node], right[node]
            else:
                near, far = right[node], left[node]
            if far_bound <= worst:
                stack.append((far, far_bound))
            stack.append((near, bound))
        return best_i, best_d


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """Immutable k-NN index over a fixed dataset."""

    dataset: Dataset
    metric: Metric
    backend: Backend
    tree: Optional[KDTree] = None

    @property
    def size(self) -> int:
        return self.dataset.size

    def _check_id(self, query_id: int) -> int:
        if not isinstance(query_id, (int, np.integer)) or not 0 <= query_id < self.size:
            raise KeyError(f"unknown record id {query_id!r}")
        return int(query_id)

    def effective_k(self, k: int) -> int:
        if k < 1:
            raise ValueError("k must be at least 1")
        return min(int(k), self.size - 1)

    def query(self, query_id: int, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor ids and distances of one record, query excluded."""
        query_id = self._check_id(query_id)
        m = self.effective_k(k)
        X = self.dataset.features
        if self.tree is not None:
            # Tree ids are row indices in the original ordering.
            ids, d = self.tree.query(X[query_id], m, self.metric, exclude=query_id)
            return ids.astype(np.int64), d
        d = from_squared(self.metric, squared_distances(X, X[query_id]))
        d[query_id] = np.inf
        ids = _smallest(d, m)
        return ids.astype(np.int64), d[ids]

    def query_all(self, k: int, threads: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor ids and distances for every record, shape (N, min(k, N-1))."""
        m = self.effective_k(k)
        n = self.size
        ids = np.empty((n, m), dtype=np.int64)
        dists = np.empty((n, m), dtype=np.float64)
        if self.tree is None:
            chunk = max(1, (1 << 21) // n)
        else:
            chunk = 256

        def work(lo, hi):
            if self.tree is None:
                self._scan_block(lo, hi, m, ids, dists)
            else:
                for i in range(lo, hi):
                    ids[i], dists[i] = self.tree.query(self.dataset.features[i], m, self.metric, exclude=i)

        run_blocks(work, n, chunk, threads)
        return ids, dists

    def _scan_block(self, lo, hi, m, ids, dists):
        X = self.dataset.features
        d = from_squared(self.metric, squared_distances(X[None, :, :], X[lo:hi, None, :]))
        rows = np.arange(hi - lo)
        d[rows, rows + lo] = np.inf
        for r in rows:
            sel = _smallest(d[r], m)
            ids[lo + r] = sel
            dists[lo + r] = d[r, sel]


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        return os.cpu_count() or 1
    return max(1, int(threads))


def run_blocks(work: Callable[[int, int], None], n: int, chunk: int, threads: Optional[int] = None) -> None:
    """Call ``work(lo, hi)`` over consecutive blocks of ``range(n)``.

    Blocks write disjoint output slices, so serial and threaded runs give
    identical results.
    """
    blocks = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    workers = min(resolve_threads(threads), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for _ in pool.map(lambda b: work(*b), blocks):
                pass
    else:
        for lo, hi in blocks:
            work(lo, hi)


def build_index(
    dataset: Dataset,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    backend: "Backend | str" = Backend.TREE,
    leaf_size: int = DEFAULT_LEAF_SIZE,
    max_tree_dimension: int = TREE_MAX_DIMENSION,
) -> NeighborIndex:
    metric = Metric.parse(metric)
    backend = Backend.parse(backend)
    if dataset.size < 2:
        raise DataError(f"need at least 2 records to find neighbors, got {dataset.size}")
    tree = None
    if backend is Backend.TREE and dataset.dimension <= max_tree_dimension:
        tree = KDTree(dataset.features, leaf_size)
    return NeighborIndex(dataset, metric, backend, tree)


def k_nearest(index: NeighborIndex, query_id: int, k: int) -> NeighborSet:
    ids, d = index.query(query_id, k)
    return NeighborSet(int(query_id), int(k), tuple(int(i) for i in ids), tuple(float(x) for x in d))
