"""k-means clustering with efficient data deletion.

Two deletion-efficient variants of Lloyd's algorithm: quantized k-means,
which verifies that a deletion leaves its memoized iterations unchanged,
and divide-and-conquer k-means, which re-solves one leaf-to-root path of a
tree of sub-problems. Both produce a model distributed exactly as if it had
been trained without the deleted row.
"""

from .bench import BenchConfig, BenchReport, deletion_equality_test, emit_report, run_benchmark
from .core import Assignment, assign, centroids_of, kmeans_loss, kmeanspp_init, lloyd
from .dataset import (
    DataError,
    DataMatrix,
    DeletionStream,
    LabeledDataset,
    gen_deletion_stream,
    gen_gaussian_mixture,
    load_csv,
    minmax_scale,
    save_csv,
)
from .dckmeans import DcModel, DcParams, dckmeans_delete, dckmeans_train
from .heuristics import heuristic_epsilon, heuristic_width
from .metrics import QualityReport, loss_ratio, nmi, silhouette
from .qkmeans import QkModel, QkParams, qkmeans_delete, qkmeans_replay, qkmeans_train
from .quantizer import LatticeQuantizer, quantize

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "BenchConfig",
    "BenchReport",
    "DataError",
    "DataMatrix",
    "DcModel",
    "DcParams",
    "DeletionStream",
    "LabeledDataset",
    "LatticeQuantizer",
    "QkModel",
    "QkParams",
    "QualityReport",
    "assign",
    "centroids_of",
    "dckmeans_delete",
    "dckmeans_train",
    "deletion_equality_test",
    "emit_report",
    "gen_deletion_stream",
    "gen_gaussian_mixture",
    "heuristic_epsilon",
    "heuristic_width",
    "kmeans_loss",
    "kmeanspp_init",
    "lloyd",
    "load_csv",
    "loss_ratio",
    "minmax_scale",
    "nmi",
    "qkmeans_delete",
    "qkmeans_replay",
    "qkmeans_train",
    "quantize",
    "run_benchmark",
    "save_csv",
    "silhouette",
]
