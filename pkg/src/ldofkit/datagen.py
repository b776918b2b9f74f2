"""Seeded synthetic data: cluster scenes with planted outliers and uniform balls.

Randomness comes from numpy's ``Generator`` with the PCG64 bit generator,
seeded explicitly, so a given seed reproduces the same dataset on any
platform running the same numpy release.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .core import DataError, Dataset

NORMAL = "normal"
OUTLIER = "outlier"
# Planted outliers must sit this many spreads away from every cluster center.
MIN_SEPARATION = 6.0


@dataclass(frozen=True)
class ClusterSpec:
    center: tuple[float, ...]
    count: int
    spread: float
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.count < 1:
            raise ValueError(f"cluster {self.name or self.center} needs count >= 1")
        if not self.spread > 0:
            raise ValueError(f"cluster {self.name or self.center} needs spread > 0")


@dataclass(frozen=True)
class SceneSpec:
    dimension: int
    clusters: tuple[ClusterSpec, ...]
    outliers: tuple[tuple[float, ...], ...] = ()
    seed: int = 0
    name: str = "scene"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        object.__setattr__(self, "outliers", tuple(tuple(float(v) for v in o) for o in self.outliers))
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if not self.clusters:
            raise ValueError("a scene needs at least one cluster")
        for c in self.clusters:
            if len(c.center) != self.dimension:
                raise ValueError(f"cluster {c.name or c.center} has dimension {len(c.center)}, expected {self.dimension}")
        for o in self.outliers:
            if len(o) != self.dimension:
                raise ValueError(f"outlier {o} has dimension {len(o)}, expected {self.dimension}")

    def check_separation(self) -> None:
        limit = MIN_SEPARATION * max(c.spread for c in self.clusters)
        for o in self.outliers:
            for c in self.clusters:
                gap = float(np.linalg.norm(np.subtract(o, c.center)))
                if not gap > limit:
                    raise DataError(
                        f"outlier {list(o)} is {gap:.3g} from cluster {c.name or list(c.center)}; "
                        f"planted outliers must be farther than {limit:.3g}"
                    )

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        try:
            clusters = [
                ClusterSpec(tuple(c["center"]), int(c["count"]), float(c["spread"]), str(c.get("name", "")))
                for c in data["clusters"]
            ]
            dimension = int(data.get("dimension", len(clusters[0].center)))
            return cls(
                dimension,
                tuple(clusters),
                tuple(tuple(o) for o in data.get("outliers", []) or []),
                int(data.get("seed", 0)),
                str(data.get("name", "scene")),
            )
        except (KeyError, TypeError, IndexError) as exc:
            raise DataError(f"malformed scene description: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dimension": self.dimension,
            "seed": self.seed,
            "clusters": [
                {"name": c.name, "center": list(c.center), "count": c.count, "spread": c.spread}
                for c in self.clusters
            ],
            "outliers": [list(o) for o in self.outliers],
        }


def load_scene(path) -> SceneSpec:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise DataError(f"{path}: expected a mapping at top level")
    return SceneSpec.from_dict(data)


def dump_scene(spec: SceneSpec, path) -> None:
    Path(path).write_text(yaml.safe_dump(spec.to_dict(), sort_keys=False), encoding="utf-8")


def default_scene(seed: Optional[int] = None) -> SceneSpec:
    """The committed 2-D scattered scene (150/50/10 cluster members, 4 outliers)."""
    text = resources.files("ldofkit").joinpath("scenes/default.yaml").read_text(encoding="utf-8")
    spec = SceneSpec.from_dict(yaml.safe_load(text))
    if seed is not None:
        spec = SceneSpec(spec.dimension, spec.clusters, spec.outliers, int(seed), spec.name)
    return spec


def generate_scene(spec: SceneSpec) -> Dataset:
    """Cluster members in spec order, then the planted outliers.

    Labels are ``"normal"`` for cluster members and ``"outlier"`` for the
    planted points.
    """
    spec.check_separation()
    rng = np.random.default_rng(spec.seed)
    blocks, labels = [], []
    for c in spec.clusters:
        blocks.append(rng.normal(loc=c.center, scale=c.spread, size=(c.count, spec.dimension)))
        labels += [NORMAL] * c.count
    if spec.outliers:
        blocks.append(np.array(spec.outliers, dtype=np.float64))
        labels += [OUTLIER] * len(spec.outliers)
    return Dataset(np.vstack(blocks), tuple(labels), name=spec.name, meta={"seed": spec.seed})


def outlier_ids(dataset: Dataset, label: str = OUTLIER) -> set[int]:
    if dataset.labels is None:
        return set()
    return {i for i, lab in enumerate(dataset.labels) if lab == label}


def uniform_ball(rng: np.random.Generator, d: int, r: float, count: int) -> np.ndarray:
    """``count`` points uniform in the d-ball of radius r, shape (count, d)."""
    direction = rng.standard_normal((count, d))
    norm = np.linalg.norm(direction, axis=1, keepdims=True)
    # A zero Gaussian draw has probability zero; guard anyway.
    norm[norm == 0] = 1.0
    radius = r * rng.random((count, 1)) ** (1.0 / d)
    return direction / norm * radius


def sample_uniform_ball(d: int, r: float, count: int, seed: int) -> Dataset:
    if count < 1:
        raise ValueError("count must be at least 1")
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if r < 0:
        raise ValueError("radius must be non-negative")
    rng = np.random.default_rng(seed)
    return Dataset(uniform_ball(rng, d, r, count), name=f"ball-d{d}", meta={"seed": seed})


def gaussian_mixture(
    centers: Sequence[Sequence[float]], counts: Sequence[int], spread: float, seed: int
) -> Dataset:
    """Isotropic Gaussian mini-clusters without planted outliers."""
    clusters = tuple(ClusterSpec(tuple(c), int(n), spread) for c, n in zip(centers, counts))
    spec = SceneSpec(len(clusters[0].center), clusters, (), seed, "mixture")
    return generate_scene(spec)
