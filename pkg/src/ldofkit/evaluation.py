"""Precision, k-sweeps over repeated runs, and Monte-Carlo checks of the LDOF bounds.

A sweep computes one k-NN pass at the largest k and derives every smaller
neighborhood from its prefix, so a sweep cell is bit-identical to a direct
detection at that k. Runs of a protocol draw their data from seeds derived
from the base seed and the run number; the detectors themselves involve no
randomness.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .baselines import knn_tables, lof_tables
from .core import DataError, Dataset, Metric, Ranking, ScoreTable, from_squared
from .datagen import uniform_ball
from .ldof import _prefix_sums, _ratio, ldof_tables
from .neighbors import Backend, _smallest, build_index
from .theory import false_detection_alpha, false_detection_bound, ldof_lower_bound

METHODS = ("ldof", "knn", "lof")
SCHEMA_VERSION = 1


def precision(ranking: "Ranking | Sequence[int]", truth: Iterable[int], n: Optional[int] = None) -> float:
    """Fraction of the n reported slots holding a true outlier.

    A ranking shorter than n (after pruning) counts its empty slots as misses.
    """
    truth = set(int(t) for t in truth)
    if not truth:
        raise DataError("precision is undefined for an empty truth set")
    if isinstance(ranking, Ranking):
        ids, n = ranking.ids, ranking.n if n is None else n
    else:
        ids = [int(i) for i in ranking]
        n = len(ids) if n is None else n
    if n < 1:
        raise ValueError("n must be at least 1")
    return len(set(ids[:n]) & truth) / n


def run_seed(base: int, run: int) -> int:
    """Independent 63-bit seed for one run of a protocol."""
    ss = np.random.SeedSequence(entropy=int(base), spawn_key=(int(run),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class TrialSpec:
    methods: tuple[str, ...] = METHODS
    k_range: tuple[int, int] = (2, 50)
    n: int = 4
    runs: int = 1
    seed: int = 0
    outlier_count: Optional[int] = None

    def __post_init__(self):
        methods = tuple(str(m).lower() for m in self.methods)
        if not methods:
            raise ValueError("at least one method is required")
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown method(s) {unknown}; expected a subset of {list(METHODS)}")
        object.__setattr__(self, "methods", tuple(dict.fromkeys(methods)))
        lo, hi = (int(v) for v in self.k_range)
        if lo > hi:
            raise ValueError(f"empty k range [{lo}, {hi}]")
        if lo < 1:
            raise ValueError("k range must start at 1 or above")
        object.__setattr__(self, "k_range", (lo, hi))
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.n < 1:
            raise ValueError("n must be at least 1")

    @property
    def ks(self) -> tuple[int, ...]:
        return tuple(range(self.k_range[0], self.k_range[1] + 1))


@dataclass
class PruningAudit:
    """Cross-check of pruned LDOF rankings against unpruned ones."""

    cells: int = 0
    high_score_pruned: int = 0
    membership_changes: int = 0
    details: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return self.high_score_pruned == 0 and self.membership_changes == 0

    def check(self, table: ScoreTable, n: int, run: int) -> None:
        self.cells += 1
        bad = int(np.count_nonzero(table.pruned & (table.score >= ldof_lower_bound())))
        pruned = set(Ranking.from_table(table, n, drop_pruned=True).ids)
        full = set(Ranking.from_table(table, n, drop_pruned=False).ids)
        self.high_score_pruned += bad
        if pruned != full:
            self.membership_changes += 1
        if bad or pruned != full:
            self.details.append({"k": table.k, "run": run, "high_score_pruned": bad, "dropped": sorted(full - pruned)})

    def merge(self, other: "PruningAudit") -> None:
        self.cells += other.cells
        self.high_score_pruned += other.high_score_pruned
        self.membership_changes += other.membership_changes
        self.details += other.details

    def to_dict(self) -> dict:
        return {
            "cells": self.cells,
            "high_score_pruned": self.high_score_pruned,
            "membership_changes": self.membership_changes,
            "details": self.details,
        }


@dataclass(eq=False)
class SweepReport:
    """Precision per (method, k, run); NaN marks a missing cell with a recorded reason."""

    methods: tuple[str, ...]
    ks: tuple[int, ...]
    precision: np.ndarray
    reasons: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    audit: PruningAudit = field(default_factory=PruningAudit)

    @property
    def runs(self) -> int:
        return self.precision.shape[2]

    def _cells(self, method: str, k_lo: Optional[int] = None, k_hi: Optional[int] = None) -> np.ndarray:
        try:
            m = self.methods.index(method)
        except ValueError:
            raise KeyError(f"method {method!r} not in report") from None
        ks = np.array(self.ks)
        lo = ks[0] if k_lo is None else k_lo
        hi = ks[-1] if k_hi is None else k_hi
        sel = (ks >= lo) & (ks <= hi)
        if not sel.any():
            raise KeyError(f"no k in [{lo}, {hi}]")
        return self.precision[m, sel, :]

    def row(self, method: str) -> np.ndarray:
        """Mean precision over runs for each k (NaN where every run is missing)."""
        cells = self._cells(method)
        return np.array([_nanmean(c) for c in cells])

    def mean(self, method: str, k: int) -> float:
        return _nanmean(self._cells(method, k, k)[0])

    def std(self, method: str, k: int) -> float:
        return _nanstd(self._cells(method, k, k)[0])

    def pooled(self, method: str, k_lo: Optional[int] = None, k_hi: Optional[int] = None) -> tuple[float, float]:
        """Mean and std pooled over every (k, run) cell with k in [k_lo, k_hi]."""
        cells = self._cells(method, k_lo, k_hi).ravel()
        return _nanmean(cells), _nanstd(cells)

    def run_means(self, method: str, k_lo: Optional[int] = None, k_hi: Optional[int] = None) -> np.ndarray:
        """Per-run precision averaged over the k range; the vectors a paired test compares."""
        cells = self._cells(method, k_lo, k_hi)
        return np.array([_nanmean(cells[:, r]) for r in range(self.runs)])

    def paired_test(self, a: str, b: str, k_lo: Optional[int] = None, k_hi: Optional[int] = None):
        """Paired t-test of two methods: over runs when there are several, else over k."""
        if self.runs > 1:
            return paired_t(self.run_means(a, k_lo, k_hi), self.run_means(b, k_lo, k_hi))
        return paired_t(self._cells(a, k_lo, k_hi)[:, 0], self._cells(b, k_lo, k_hi)[:, 0])

    def equals(self, other: "SweepReport") -> bool:
        return (
            self.methods == other.methods
            and self.ks == other.ks
            and self.precision.shape == other.precision.shape
            and bool(np.array_equal(self.precision, other.precision, equal_nan=True))
            and self.reasons == other.reasons
        )

    def to_dict(self) -> dict:
        cells = {}
        aggregate = {}
        for mi, m in enumerate(self.methods):
            cells[m] = {str(k): [_json_num(v) for v in self.precision[mi, ki]] for ki, k in enumerate(self.ks)}
            aggregate[m] = {
                str(k): {"mean": _json_num(self.mean(m, k)), "std": _json_num(self.std(m, k))} for k in self.ks
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "methods": list(self.methods),
            "ks": list(self.ks),
            "runs": self.runs,
            "meta": self.meta,
            "cells": cells,
            "aggregate": aggregate,
            "missing": [
                {"method": m, "k": k, "run": r, "reason": why} for (m, k, r), why in sorted(self.reasons.items())
            ],
            "pruning_audit": self.audit.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepReport":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported report schema version {version!r}")
        methods, ks, runs = tuple(data["methods"]), tuple(data["ks"]), int(data["runs"])
        p = np.full((len(methods), len(ks), runs), np.nan)
        for mi, m in enumerate(methods):
            for ki, k in enumerate(ks):
                p[mi, ki] = [np.nan if v is None else v for v in data["cells"][m][str(k)]]
        reasons = {(e["method"], e["k"], e["run"]): e["reason"] for e in data.get("missing", [])}
        a = data.get("pruning_audit", {})
        audit = PruningAudit(a.get("cells", 0), a.get("high_score_pruned", 0), a.get("membership_changes", 0), a.get("details", []))
        return cls(methods, ks, p, reasons, dict(data.get("meta", {})), audit)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path) -> "SweepReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_csv(self, path) -> None:
        """One ``cell`` row per (method, k, run) and one ``aggregate`` row per (method, k)."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row_type", "method", "k", "run", "precision", "std", "reason"])
            for mi, m in enumerate(self.methods):
                for ki, k in enumerate(self.ks):
                    for r in range(self.runs):
                        v = self.precision[mi, ki, r]
                        w.writerow(["cell", m, k, r, "" if math.isnan(v) else repr(float(v)), "", self.reasons.get((m, k, r), "")])
            for m in self.methods:
                for k in self.ks:
                    mean, std = self.mean(m, k), self.std(m, k)
                    w.writerow(["aggregate", m, k, "", "" if math.isnan(mean) else repr(mean), "" if math.isnan(std) else repr(std), ""])


def _nanmean(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    a = a[~np.isnan(a)]
    return float(a.mean()) if a.size else float("nan")


def _nanstd(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    a = a[~np.isnan(a)]
    return float(a.std()) if a.size else float("nan")


def _json_num(v: float):
    return None if math.isnan(v) else float(v)


def _score_tables(method: str, index, ks, ids, dists):
    if method == "ldof":
        return ldof_tables(index, ks, neighbors=(ids, dists))
    if method == "knn":
        return knn_tables(dists, ks)
    return lof_tables(ids, dists, ks)


def _sweep_one(dataset, truth, trial, metric, backend, threads, run, audit):
    """Precision per (method, k) for a single dataset, plus missing-cell reasons."""
    ks = trial.ks
    out = np.full((len(trial.methods), len(ks)), np.nan)
    reasons = {}
    truth = set(int(t) for t in truth)
    if not truth:
        for m in trial.methods:
            for k in ks:
                reasons[(m, k, run)] = "empty truth set"
        return out, reasons
    n_records = dataset.size
    valid = [k for k in ks if k <= n_records - 1]
    for k in ks:
        if k > n_records - 1:
            for m in trial.methods:
                reasons[(m, k, run)] = f"k={k} exceeds N-1={n_records - 1}"
    if not valid:
        return out, reasons
    index = build_index(dataset, metric, backend)
    ids, dists = index.query_all(max(valid), threads)
    for mi, m in enumerate(trial.methods):
        mks = [k for k in valid if not (m == "ldof" and k < 2)]
        for k in set(valid) - set(mks):
            reasons[(m, k, run)] = "LDOF needs k >= 2"
        if not mks:
            continue
        try:
            tables = _score_tables(m, index, mks, ids, dists)
        except (DataError, ValueError, FloatingPointError) as exc:
            for k in mks:
                reasons[(m, k, run)] = f"{type(exc).__name__}: {exc}"
            continue
        for k, table in tables.items():
            ranking = Ranking.from_table(table, trial.n)
            out[mi, ks.index(k)] = precision(ranking, truth)
            if m == "ldof" and audit is not None:
                audit.check(table, trial.n, run)
    return out, reasons


def sweep_k(
    dataset: Dataset,
    truth: Iterable[int],
    trial: TrialSpec,
    metric: "Metric | str" = Metric.EUCLIDEAN,
    backend: "Backend | str" = Backend.TREE,
    threads: Optional[int] = None,
) -> SweepReport:
    """Precision of each method at each k of ``trial`` on one fixed dataset.

    LOF uses MinPts = k. Failures become missing cells with a reason. The
    detectors are deterministic, so with a fixed dataset every run repeats
    the first; use :func:`run_protocol` to vary the data between runs.
    """
    metric = Metric.parse(metric)
    backend = Backend.parse(backend)
    audit = PruningAudit()
    cells, reasons = _sweep_one(dataset, truth, trial, metric, backend, threads, 0, audit)
    p = np.repeat(cells[:, :, None], trial.runs, axis=2)
    for r in range(1, trial.runs):
        for (m, k, _), why in list(reasons.items()):
            reasons[(m, k, r)] = why
    meta = _meta(dataset.name, trial, metric, backend, seeds=[trial.seed] * trial.runs)
    return SweepReport(trial.methods, trial.ks, p, reasons, meta, audit)


def run_protocol(
    trial: TrialSpec,
    make_run: Callable[[int, int], tuple[Dataset, Iterable[int]]],
    metric: "Metric | str" = Metric.EUCLIDEAN,
    backend: "Backend | str" = Backend.TREE,
    threads: Optional[int] = None,
    name: str = "",
) -> SweepReport:
    """Repeat a sweep on freshly drawn data for each run.

    ``make_run(run, seed)`` returns ``(dataset, truth)`` for one run; the seed
    comes from :func:`run_seed`, so any single run can be replayed alone.
    """
    metric = Metric.parse(metric)
    backend = Backend.parse(backend)
    p = np.full((len(trial.methods), len(trial.ks), trial.runs), np.nan)
    reasons, seeds, audit = {}, [], PruningAudit()
    for r in range(trial.runs):
        seed = run_seed(trial.seed, r)
        seeds.append(seed)
        dataset, truth = make_run(r, seed)
        cells, why = _sweep_one(dataset, truth, trial, metric, backend, threads, r, audit)
        p[:, :, r] = cells
        reasons.update(why)
        name = name or dataset.name
    return SweepReport(trial.methods, trial.ks, p, reasons, _meta(name, trial, metric, backend, seeds), audit)


def _meta(name, trial, metric, backend, seeds):
    return {
        "dataset": name,
        "n": trial.n,
        "k_range": list(trial.k_range),
        "base_seed": trial.seed,
        "run_seeds": seeds,
        "outlier_count": trial.outlier_count,
        "metric": metric.value,
        "backend": backend.value,
    }


def paired_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Paired t statistic and two-sided p-value for equal-length samples."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("paired test needs two equal-length samples of size >= 2")
    res = stats.ttest_rel(a, b)
    return float(res.statistic), float(res.pvalue)


def _concat_labels(a: Dataset, b: Dataset):
    if a.labels is None and b.labels is None:
        return None
    la = a.labels if a.labels is not None else (None,) * a.size
    lb = b.labels if b.labels is not None else (None,) * b.size
    return la + lb


def mix_outliers(
    normal: Dataset,
    outlier_pool: Dataset,
    count: int,
    mode: str = "first",
    seed: Optional[int] = None,
) -> tuple[Dataset, set[int]]:
    """Append ``count`` records of ``outlier_pool`` to ``normal``.

    ``mode="first"`` takes the pool's leading records; ``"random"`` draws
    without replacement. Injected records receive ids N, N+1, ... and form
    the returned truth set.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count > outlier_pool.size:
        raise DataError(f"cannot draw {count} outliers from a pool of {outlier_pool.size}")
    if normal.dimension != outlier_pool.dimension:
        raise DataError(f"dimension mismatch: {normal.dimension} vs {outlier_pool.dimension}")
    if count == 0:
        return normal, set()
    if mode == "first":
        pick = np.arange(count)
    elif mode == "random":
        pick = np.sort(np.random.default_rng(seed).choice(outlier_pool.size, count, replace=False))
    else:
        raise ValueError(f"unknown mode {mode!r}; expected first or random")
    pool = outlier_pool.subset(pick)
    mixed = Dataset(
        np.vstack([normal.features, pool.features]),
        _concat_labels(normal, pool),
        source_ids=tuple(normal.source_id(i) for i in range(normal.size)) + pool.source_ids,
        name=normal.name,
        meta={"normal_count": normal.size, "outlier_count": count, "mode": mode, "seed": seed},
    )
    return mixed, set(range(normal.size, normal.size + count))


def subsample_normals(dataset: Dataset, count: int, seed: Optional[int] = None) -> Dataset:
    """Uniform sample of ``count`` records without replacement, kept in source order."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if count > dataset.size:
        raise DataError(f"cannot sample {count} records from {dataset.size}")
    pick = np.sort(np.random.default_rng(seed).choice(dataset.size, count, replace=False))
    return dataset.subset(pick)


def _center_ldof(points: np.ndarray, metric: Metric) -> np.ndarray:
    """LDOF of the origin against each batch of neighbor sets, shape (B, k, d) -> (B,)."""
    b, k, d = points.shape
    flat = points.reshape(b * k, d)
    ids = np.arange(b * k).reshape(b, k)
    dists = from_squared(metric, np.cumsum(points * points, axis=2)[:, :, -1])
    outer, inner = _prefix_sums(flat, ids, dists, metric)
    return _ratio(outer[:, -1] / k, inner[:, -1] / (k * (k - 1) / 2))


@dataclass(frozen=True)
class LowerBoundReport:
    d: int
    k: int
    samples: int
    trials: int
    seed: int
    metric: str
    values: tuple[float, ...]
    tolerance: float = 0.05

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def deviation(self) -> float:
        return self.mean - ldof_lower_bound()

    @property
    def passed(self) -> bool:
        return abs(self.deviation) <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "check": "lower_bound", "d": self.d, "k": self.k, "samples": self.samples, "trials": self.trials,
            "seed": self.seed, "metric": self.metric, "mean": self.mean, "expected": ldof_lower_bound(),
            "deviation": self.deviation, "tolerance": self.tolerance, "passed": self.passed,
        }


def verify_lower_bound(
    d: int,
    k: int,
    samples: int,
    trials: int,
    seed: int = 0,
    metric: "Metric | str" = Metric.SQUARED_EUCLIDEAN,
    tolerance: float = 0.05,
) -> LowerBoundReport:
    """LDOF of the center of a uniform unit d-ball, using its k nearest samples.

    The limit 1/2 holds for squared Euclidean distance, the default here.
    """
    metric = Metric.parse(metric)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > samples:
        raise ValueError(f"k={k} exceeds samples={samples}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    values = []
    for t in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(t,)))
        pts = uniform_ball(rng, d, 1.0, samples)
        r = from_squared(metric, np.cumsum(pts * pts, axis=1)[:, -1])
        near = pts[_smallest(r, k)]
        values.append(float(_center_ldof(near[None], metric)[0]))
    return LowerBoundReport(d, k, samples, trials, int(seed), metric.value, tuple(values), tolerance)


@dataclass(frozen=True)
class FalseDetectionReport:
    d: int
    k: int
    c: float
    trials: int
    seed: int
    metric: str
    exceedances: int
    alpha: float
    bound: float

    @property
    def frequency(self) -> float:
        return self.exceedances / self.trials

    @property
    def violated(self) -> bool:
        return self.frequency > self.bound

    @property
    def passed(self) -> bool:
        return not self.violated

    def to_dict(self) -> dict:
        return {
            "check": "false_detection", "d": self.d, "k": self.k, "c": self.c, "trials": self.trials, "seed": self.seed,
            "metric": self.metric, "exceedances": self.exceedances, "frequency": self.frequency,
            "alpha": self.alpha, "bound": self.bound, "violated": self.violated, "passed": self.passed,
        }


def verify_false_detection(
    d: int,
    k: int,
    c: float,
    trials: int,
    seed: int = 0,
    metric: "Metric | str" = Metric.SQUARED_EUCLIDEAN,
    batch: int = 1000,
) -> FalseDetectionReport:
    """How often the center of k uniform points in the unit d-ball scores above c."""
    metric = Metric.parse(metric)
    alpha = false_detection_alpha(d, c)
    if k < 3:
        raise ValueError("k must be at least 3")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    hits = 0
    for lo in range(0, trials, batch):
        b = min(batch, trials - lo)
        pts = uniform_ball(rng, d, 1.0, b * k).reshape(b, k, d)
        hits += int(np.count_nonzero(_center_ldof(pts, metric) > c))
    return FalseDetectionReport(d, k, float(c), trials, int(seed), metric.value, hits, alpha, false_detection_bound(k, d, c))


# Names used by the operation contract; same functions.
verify_theorem1 = verify_lower_bound
verify_theorem2 = verify_false_detection
