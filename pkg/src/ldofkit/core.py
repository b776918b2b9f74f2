"""Shared domain types: datasets, distance metrics, neighbor sets and scores."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SQUARED_EUCLIDEAN = "squared_euclidean"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown metric {value!r}; expected one of {names}") from None


def squared_distances(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from ``query`` to each row of ``points``.

    Coordinates are accumulated one dimension at a time, in order. Every
    distance in the library goes through this kernel so that two code paths
    visiting the same pair produce bit-identical values regardless of array
    shapes or batch sizes.
    """
    points = np.asarray(points, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    acc = np.zeros(np.broadcast_shapes(points.shape[:-1], query.shape[:-1]), dtype=np.float64)
    for j in range(points.shape[-1]):
        diff = points[..., j] - query[..., j]
        acc += diff * diff
    return acc


def from_squared(metric: Metric, sq: np.ndarray) -> np.ndarray:
    if metric is Metric.EUCLIDEAN:
        return np.sqrt(sq)
    return sq


def distance(metric: "Metric | str", x: Sequence[float], y: Sequence[float]) -> float:
    metric = Metric.parse(metric)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise DataError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("feature vectors must be finite")
    sq = squared_distances(x[None, :], y)
    return float(from_squared(metric, sq)[0])


@dataclass(frozen=True)
class Record:
    id: int
    features: tuple[float, ...]
    label: Optional[str] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable collection of N records of dimension d.

    Record ids are row indices. ``source_ids`` keeps the identifiers from
    the originating file or parent dataset when rows were reindexed.
    """

    features: np.ndarray
    labels: Optional[tuple[Optional[str], ...]] = None
    source_ids: Optional[tuple] = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        if X.ndim != 2:
            raise DataError(f"features must be a 2-D array, got shape {X.shape}")
        if X.shape[1] < 1:
            raise DataError("dimension must be at least 1")
        if not np.all(np.isfinite(X)):
            bad = int(np.argwhere(~np.isfinite(X))[0][0])
            raise DataError(f"record {bad} has a non-finite feature value")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            labels = tuple(None if lab is None else str(lab) for lab in self.labels)
            if len(labels) != X.shape[0]:
                raise DataError(f"{len(labels)} labels for {X.shape[0]} records")
            object.__setattr__(self, "labels", labels)
        if self.source_ids is not None:
            source_ids = tuple(self.source_ids)
            if len(source_ids) != X.shape[0]:
                raise DataError(f"{len(source_ids)} source ids for {X.shape[0]} records")
            object.__setattr__(self, "source_ids", source_ids)

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[Sequence[float]],
        labels: Optional[Iterable[Optional[str]]] = None,
        **kwargs,
    ) -> "Dataset":
        rows = [list(r) for r in rows]
        if not rows:
            raise DataError("dataset is empty")
        width = len(rows[0])
        for i, r in enumerate(rows):
            if len(r) != width:
                raise DataError(f"ragged rows: record {i} has {len(r)} features, expected {width}")
        return cls(np.array(rows, dtype=np.float64), None if labels is None else tuple(labels), **kwargs)

    @classmethod
    def from_records(cls, records: Sequence[Record], **kwargs) -> "Dataset":
        for i, r in enumerate(records):
            if r.id != i:
                raise DataError(f"record ids must be 0..N-1 in order; position {i} has id {r.id}")
        labels = [r.label for r in records]
        return cls.from_rows(
            [r.features for r in records],
            labels=None if all(lab is None for lab in labels) else labels,
            **kwargs,
        )

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.size

    def record(self, i: int) -> Record:
        if not 0 <= i < self.size:
            raise KeyError(f"unknown record id {i}")
        label = None if self.labels is None else self.labels[i]
        return Record(i, tuple(float(v) for v in self.features[i]), label)

    @property
    def records(self) -> tuple[Record, ...]:
        return tuple(self.record(i) for i in range(self.size))

    def source_id(self, i: int):
        return i if self.source_ids is None else self.source_ids[i]

    def subset(self, ids: Sequence[int], name: Optional[str] = None) -> "Dataset":
        """Rows ``ids`` as a new dataset with fresh ids; source ids are carried over."""
        ids = [int(i) for i in ids]
        if not ids:
            raise DataError("subset is empty")
        labels = None if self.labels is None else tuple(self.labels[i] for i in ids)
        return Dataset(
            self.features[ids],
            labels,
            source_ids=tuple(self.source_id(i) for i in ids),
            name=self.name if name is None else name,
            meta=dict(self.meta),
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.source_ids, self.name, dict(self.meta))

    def equals(self, other: "Dataset") -> bool:
        return (
            self.features.shape == other.features.shape
            and bool(np.array_equal(self.features, other.features))
            and self.labels == other.labels
        )


@dataclass(frozen=True)
class NeighborSet:
    query_id: int
    k: int
    ids: tuple[int, ...]
    distances: tuple[float, ...]

    @property
    def neighbors(self) -> list[tuple[int, float]]:
        return list(zip(self.ids, self.distances))

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class OutlierScore:
    id: int
    score: float
    knn_dist: float = float("nan")
    knn_inner_dist: float = float("nan")
    pruned: bool = False


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Per-record scores for one method at one neighborhood size."""

    method: str
    k: int
    score: np.ndarray
    knn_dist: Optional[np.ndarray] = None
    knn_inner_dist: Optional[np.ndarray] = None
    pruned: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.score)

    def entry(self, i: int) -> OutlierScore:
        return OutlierScore(
            id=int(i),
            score=float(self.score[i]),
            knn_dist=float("nan") if self.knn_dist is None else float(self.knn_dist[i]),
            knn_inner_dist=float("nan") if self.knn_inner_dist is None else float(self.knn_inner_dist[i]),
            pruned=False if self.pruned is None else bool(self.pruned[i]),
        )

    def order(self, drop_pruned: bool = True) -> np.ndarray:
        """Record ids by descending score, ties by ascending id."""
        ids = np.arange(len(self.score))
        order = np.lexsort((ids, -self.score))
        if drop_pruned and self.pruned is not None:
            order = order[~self.pruned[order]]
        return order


@dataclass(frozen=True, eq=False)
class Ranking:
    method: str
    n: int
    k: int
    entries: tuple[OutlierScore, ...]
    table: Optional[ScoreTable] = None

    @property
    def ids(self) -> list[int]:
        return [e.id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_table(cls, table: ScoreTable, n: int, drop_pruned: bool = True) -> "Ranking":
        if n < 1:
            raise ValueError("n must be at least 1")
        top = table.order(drop_pruned)[:n]
        return cls(table.method, n, table.k, tuple(table.entry(i) for i in top), table)
