"""Clustering quality: loss ratio, silhouette coefficient and NMI."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import Assignment, as_points

DEFAULT_SILHOUETTE_CAP = 10_000


@dataclass
class QualityReport:
    loss: float
    loss_ratio: float
    silhouette: float
    nmi: float
    subsample_seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def loss_ratio(method_loss: float, baseline_loss: float) -> float:
    if not baseline_loss > 0:
        raise ValueError("baseline loss must be positive")
    return method_loss / baseline_loss


def silhouette(D, labels, sample_cap: int = DEFAULT_SILHOUETTE_CAP, rng=None) -> float:
    """Mean silhouette coefficient with Euclidean distances.

    When there are more than ``sample_cap`` points, a uniform subsample of
    that size (drawn from ``rng``) is scored against itself. Points alone in
    their cluster score 0.
    """
    X = as_points(D)
    labels = np.asarray(labels.labels if isinstance(labels, Assignment) else labels)
    if len(labels) != len(X):
        raise ValueError("labels and points differ in length")
    if len(X) > sample_cap:
        rng = np.random.default_rng(rng)
        idx = np.sort(rng.choice(len(X), size=sample_cap, replace=False))
        X, labels = X[idx], labels[idx]
    uniq, lab = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise ValueError("silhouette needs at least 2 non-empty clusters")
    n, k = len(X), len(uniq)
    counts = np.bincount(lab, minlength=k).astype(np.float64)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), lab] = 1.0
    score = np.zeros(n)
    step = max(1, (1 << 22) // n)
    for s in range(0, n, step):
        dist = cdist(X[s : s + step], X)
        sums = dist @ onehot  # distance mass to each cluster
        own = lab[s : s + step]
        rows = np.arange(len(own))
        own_n = counts[own]
        a = sums[rows, own] / np.maximum(own_n - 1, 1)
        sums[rows, own] = np.inf
        b = (sums / counts).min(axis=1)
        denom = np.maximum(a, b)
        val = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        score[s : s + step] = np.where(own_n > 1, val, 0.0)
    return float(score.mean())


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return -math.fsum(p * np.log(p))


def nmi(pred, truth) -> float:
    """Mutual information normalized by the arithmetic mean of both entropies.

    Two constant labelings score 1; exactly one constant labeling scores 0.
    Sums are correctly rounded, so renaming labels cannot change the result.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if len(pred) != len(truth):
        raise ValueError("label sequences differ in length")
    n = len(pred)
    if n == 0:
        raise ValueError("empty label sequences")
    _, a = np.unique(pred, return_inverse=True)
    _, b = np.unique(truth, return_inverse=True)
    ka, kb = a.max() + 1, b.max() + 1
    table = np.zeros((ka, kb))
    np.add.at(table, (a, b), 1.0)
    ha = _entropy(table.sum(axis=1), n)
    hb = _entropy(table.sum(axis=0), n)
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = math.fsum(table[nz] / n * np.log(table[nz] * n / outer[nz]))
    return float(min(1.0, max(0.0, mi / ((ha + hb) / 2))))
