"""Top-n outlier detection with the local distance-based outlier factor (LDOF)."""

from .baselines import k_distance, lof_score, top_n_knn, top_n_lof
from .core import DataError, Dataset, Metric, NeighborSet, OutlierScore, Ranking, Record, ScoreTable, distance
from .datagen import ClusterSpec, SceneSpec, generate_scene, default_scene, sample_uniform_ball
from .evaluation import (
    SweepReport,
    TrialSpec,
    mix_outliers,
    precision,
    run_protocol,
    subsample_normals,
    sweep_k,
    verify_lower_bound,
    verify_false_detection,
)
from .io import CsvSchema, filter_by_label, load_csv
from .ldof import knn_distance, knn_inner_distance, ldof_score, top_n_ldof
from .neighbors import Backend, NeighborIndex, build_index, k_nearest
from .theory import false_detection_alpha, false_detection_bound, ldof_lower_bound, uniform_ball_mean_square

__version__ = "0.1.0"

__all__ = [
    "Backend", "ClusterSpec", "CsvSchema", "DataError", "Dataset", "Metric", "NeighborIndex", "NeighborSet",
    "OutlierScore", "Ranking", "Record", "SceneSpec", "ScoreTable", "SweepReport", "TrialSpec", "build_index",
    "distance", "false_detection_alpha", "false_detection_bound", "filter_by_label", "generate_scene",
    "k_distance", "k_nearest", "knn_distance", "knn_inner_distance", "ldof_lower_bound", "ldof_score",
    "load_csv", "lof_score", "mix_outliers", "default_scene", "precision", "run_protocol", "sample_uniform_ball",
    "subsample_normals", "sweep_k", "top_n_knn", "top_n_ldof", "top_n_lof", "uniform_ball_mean_square",
    "verify_lower_bound", "verify_false_detection",
]
