"""Closed-form quantities behind LDOF's pruning rule and error guarantee.

For a query point whose k neighbors are uniform in a ball around it, the
LDOF tends to 1/2 (squared Euclidean distance), and

    P[LDOF > c] < exp(-alpha * (k - 2)),
    alpha = 2/25 * (1 - 1/(2c))**2 * (d / (d + 2))**2,    c > 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def ldof_lower_bound() -> float:
    return 0.5


def false_detection_alpha(d: int, c: float) -> float:
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if not c > 0.5:
        raise ValueError(f"threshold c must exceed 1/2 (got {c}); at c = 1/2 the bound degenerates to alpha = 0")
    shrink = 1.0 - 1.0 / (2.0 * c)
    ratio = d / (d + 2.0)
    return 2.0 / 25.0 * shrink * shrink * ratio * ratio


def false_detection_bound(k: int, d: int, c: float) -> float:
    """Upper bound on the probability that an inlier scores LDOF > c."""
    if k < 2:
        raise ValueError("k must be at least 2")
    alpha = false_detection_alpha(d, c)
    return min(1.0, math.exp(-alpha * (k - 2)))


def uniform_ball_mean_square(d: int, r: float) -> float:
    """E||x||^2 for x uniform in the d-ball of radius r."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if r < 0:
        raise ValueError("radius must be non-negative")
    return d / (d + 2.0) * r * r


@dataclass(frozen=True)
class TheoryBound:
    k: int
    d: int
    c: float
    alpha: float
    bound: float

    @classmethod
    def evaluate(cls, k: int, d: int, c: float) -> "TheoryBound":
        return cls(k, d, c, false_detection_alpha(d, c), false_detection_bound(k, d, c))
