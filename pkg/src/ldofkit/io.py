"""Dataset ingestion and result serialization.

Three on-disk layouts are understood out of the box:

* ``wdbc``    UCI breast-cancer diagnostic file: ``id,diagnosis,f1..f30``,
              comma separated, no header.
* ``shuttle`` UCI Statlog shuttle file: nine integer features followed by
              the class (1-7), whitespace separated, no header.
* ``dataset`` the library's own format written by :func:`write_dataset_csv`:
              header ``id,label,x0..x{d-1}``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import DataError, Dataset, Ranking

SCALINGS = ("none", "zscore", "minmax")


@dataclass(frozen=True)
class CsvSchema:
    """How to read a delimited text file into a :class:`Dataset`.

    ``delimiter=None`` splits on runs of whitespace. ``feature_columns`` is
    either a list of column indices or ``"rest"`` (every column that is not
    the id or label column). ``scaling`` is applied per feature over the
    loaded rows: ``zscore`` to zero mean and unit variance, ``minmax`` onto
    [0, 1].
    """

    delimiter: Optional[str] = ","
    has_header: bool = False
    id_column: Optional[int] = None
    label_column: Optional[int] = None
    feature_columns: Union[str, tuple[int, ...]] = "rest"
    scaling: str = "none"

    def __post_init__(self):
        if self.scaling not in SCALINGS:
            raise ValueError(f"unknown scaling {self.scaling!r}; expected one of {', '.join(SCALINGS)}")
        if self.feature_columns != "rest":
            cols = tuple(int(c) for c in self.feature_columns)
            if not cols:
                raise ValueError("feature_columns must not be empty")
            if {self.id_column, self.label_column} & set(cols):
                raise ValueError("feature columns overlap the id or label column")
            object.__setattr__(self, "feature_columns", cols)
        if self.id_column is not None and self.id_column == self.label_column:
            raise ValueError("id and label columns must differ")

    @property
    def standardize(self) -> bool:
        return self.scaling == "zscore"

    def replace(self, **changes) -> "CsvSchema":
        return dataclasses.replace(self, **changes)


WDBC = CsvSchema(delimiter=",", id_column=0, label_column=1)
SHUTTLE = CsvSchema(delimiter=None, label_column=9, feature_columns=tuple(range(9)))
DATASET = CsvSchema(delimiter=",", has_header=True, id_column=0, label_column=1)
PLAIN = CsvSchema()
PRESETS = {"wdbc": WDBC, "shuttle": SHUTTLE, "dataset": DATASET, "plain": PLAIN}


def _split_rows(path: Path, schema: CsvSchema):
    with open(path, encoding="utf-8", newline="") as fh:
        if schema.delimiter is None:
            rows = [(no, line.split()) for no, line in enumerate(fh, start=1)]
        else:
            reader = csv.reader(fh, delimiter=schema.delimiter)
            rows = [(reader.line_num, [c.strip() for c in row]) for row in reader]
    rows = [(no, cells) for no, cells in rows if cells and any(cells)]
    if schema.has_header and rows:
        rows = rows[1:]
    return rows


def scale_features(X: np.ndarray, scaling: str) -> np.ndarray:
    if scaling == "none":
        return X
    if scaling == "zscore":
        center = X.mean(axis=0)
        width = X.std(axis=0)
    elif scaling == "minmax":
        center = X.min(axis=0)
        width = X.max(axis=0) - center
    else:
        raise ValueError(f"unknown scaling {scaling!r}")
    constant = width == 0
    if constant.any():
        warnings.warn(
            f"constant feature column(s) {np.flatnonzero(constant).tolist()} mapped to 0",
            RuntimeWarning,
            stacklevel=3,
        )
    out = (X - center) / np.where(constant, 1.0, width)
    out[:, constant] = 0.0
    return out


def load_csv(path, schema: CsvSchema = PLAIN, name: Optional[str] = None) -> Dataset:
    path = Path(path)
    rows = _split_rows(path, schema)
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    for no, cells in rows:
        if len(cells) != width:
            raise DataError(f"{path}:{no}: expected {width} columns, found {len(cells)}")
    reserved = {schema.id_column, schema.label_column} - {None}
    for col in reserved:
        if not 0 <= col < width:
            raise DataError(f"{path}: column {col} out of range for {width} columns")
    if schema.feature_columns == "rest":
        cols = [c for c in range(width) if c not in reserved]
    else:
        cols = list(schema.feature_columns)
        bad = [c for c in cols if not 0 <= c < width]
        if bad:
            raise DataError(f"{path}: feature column(s) {bad} out of range for {width} columns")
    if not cols:
        raise DataError(f"{path}: no feature columns")

    X = np.empty((len(rows), len(cols)))
    labels, source_ids = [], []
    for r, (no, cells) in enumerate(rows):
        for j, c in enumerate(cols):
            try:
                X[r, j] = float(cells[c])
            except ValueError:
                raise DataError(f"{path}:{no}: column {c} is not numeric: {cells[c]!r}") from None
            if not np.isfinite(X[r, j]):
                raise DataError(f"{path}:{no}: column {c} is not finite: {cells[c]!r}")
        if schema.label_column is not None:
            labels.append(cells[schema.label_column] or None)
        if schema.id_column is not None:
            source_ids.append(_parse_id(cells[schema.id_column]))
    X = scale_features(X, schema.scaling)
    return Dataset(
        X,
        tuple(labels) if schema.label_column is not None else None,
        source_ids=tuple(source_ids) if schema.id_column is not None else None,
        name=name or path.stem,
        meta={"path": str(path), "scaling": schema.scaling},
    )


def _parse_id(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def filter_by_label(dataset: Dataset, predicate: Union[str, Callable[[Optional[str]], bool]]) -> Dataset:
    """Records whose label satisfies ``predicate`` (or equals it, for a string).

    The result is reindexed from 0; ``source_ids`` maps back to the parent.
    """
    if dataset.labels is None:
        raise DataError("dataset has no labels to filter on")
    if isinstance(predicate, str):
        wanted = predicate
        predicate = lambda lab: lab == wanted  # noqa: E731
    ids = [i for i, lab in enumerate(dataset.labels) if predicate(lab)]
    if not ids:
        raise DataError("no records match the label filter")
    return dataset.subset(ids)


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Write ``dataset`` so that ``load_csv(path, DATASET)`` reads it back exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"] + [f"x{j}" for j in range(dataset.dimension)])
        for i in range(dataset.size):
            label = "" if dataset.labels is None or dataset.labels[i] is None else dataset.labels[i]
            w.writerow([dataset.source_id(i), label] + [repr(float(v)) for v in dataset.features[i]])


def read_dataset_csv(path) -> Dataset:
    return load_csv(path, DATASET)


def _fmt(value: float) -> str:
    return "" if value != value else repr(float(value))


def write_ranking_csv(ranking: Ranking, path, dataset: Optional[Dataset] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "id", "source_id", "label", "score", "knn_dist", "knn_inner_dist"])
        for rank, e in enumerate(ranking.entries, start=1):
            source = dataset.source_id(e.id) if dataset is not None else e.id
            label = ""
            if dataset is not None and dataset.labels is not None and dataset.labels[e.id] is not None:
                label = dataset.labels[e.id]
            w.writerow([rank, e.id, source, label, _fmt(e.score), _fmt(e.knn_dist), _fmt(e.knn_inner_dist)])


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def export_wdbc(path, rows: Optional[Sequence[int]] = None) -> int:
    """Write scikit-learn's bundled copy of WDBC in the UCI file layout.

    scikit-learn keeps the UCI row order but drops the patient ID column;
    1-based row numbers are written in its place. Returns the row count.
    """
    try:
        from sklearn.datasets import load_breast_cancer
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError("exporting WDBC needs scikit-learn (pip install scikit-learn)") from exc
    bunch = load_breast_cancer()
    diagnosis = np.where(bunch.target == 0, "M", "B")
    rows = range(len(diagnosis)) if rows is None else rows
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        for i in rows:
            w.writerow([i + 1, diagnosis[i]] + [repr(float(v)) for v in bunch.data[i]])
            count += 1
    return count
