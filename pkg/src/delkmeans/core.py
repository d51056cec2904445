"""k-means primitives shared by the baseline and both deletion-efficient solvers.

Centroid sets are plain ``(k, d)`` float64 arrays. Every routine accepts
either an ``(n, d)`` array or a :class:`~delkmeans.dataset.DataMatrix`; for
the latter only live rows take part, in row order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import DataMatrix

# rows per block in the distance kernel: keeps the (rows, k, d) temporary small
_BLOCK_ELEMS = 1 << 21


@dataclass
class Assignment:
    """Nearest-centroid labels (aligned with the live rows) and cluster sizes."""

    labels: np.ndarray
    sizes: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def as_points(D) -> np.ndarray:
    if isinstance(D, DataMatrix):
        return D.live_points()
    X = np.asarray(D, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def sq_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Full squared Euclidean distances, shape ``(n, k)``.

    Computed as the sum of squared coordinate differences (no norm
    expansion), so a point equidistant from two centroids really ties.
    """
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if X.shape[-1] != C.shape[-1]:
        raise ValueError(f"dimension mismatch: data d={X.shape[-1]}, centroids d={C.shape[-1]}")
    n, k = len(X), len(C)
    out = np.empty((n, k))
    step = max(1, _BLOCK_ELEMS // max(1, k * X.shape[1]))
    for s in range(0, n, step):
        diff = X[s : s + step, None, :] - C[None, :, :]
        np.einsum("ijk,ijk->ij", diff, diff, out=out[s : s + step])
    return out


def _nearest(X, C):
    dist = sq_distances(X, C)
    labels = np.argmin(dist, axis=1)  # first minimum: ties go to the lowest index
    return labels, dist[np.arange(len(X)), labels]


def assign(D, C) -> Assignment:
    """Map each point to its nearest centroid; ties break to the lowest index."""
    X = as_points(D)
    C = np.asarray(C, dtype=np.float64)
    labels, _ = _nearest(X, C)
    return Assignment(labels, np.bincount(labels, minlength=len(C)))


def centroids_of(D, labels, k: int, fill=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster means.

    Returns ``(centroids, empty)`` where ``empty`` flags clusters without
    members. Empty rows are copied from ``fill`` when given, else zero.
    Members are summed in row order, so a cluster with the same member
    sequence always gets a bit-identical mean.
    """
    X = as_points(D)
    labels = np.asarray(labels.labels if isinstance(labels, Assignment) else labels)
    counts = np.bincount(labels, minlength=k)
    C = np.zeros((k, X.shape[1])) if fill is None else np.array(fill, dtype=np.float64)
    nonempty = counts > 0
    if len(X):
        order = np.argsort(labels, kind="stable")
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        sums = np.add.reduceat(X[order], starts[nonempty], axis=0)
        C[nonempty] = sums / counts[nonempty, None]
    return C, ~nonempty


def kmeans_loss(D, C) -> float:
    """Sum over points of the squared distance to the nearest centroid."""
    X = as_points(D)
    if len(X) == 0:
        return 0.0
    return float(sq_distances(X, C).min(axis=1).sum())


def d2_sample(weights: np.ndarray, rng: np.random.Generator, exclude=()) -> int:
    """Draw an index with probability proportional to ``weights``.

    Falls back to a uniform draw over indices not in ``exclude`` when all
    weights are zero.
    """
    cum = np.cumsum(weights)
    total = cum[-1]
    if total > 0:
        r = rng.random() * total
        i = int(np.searchsorted(cum, r, side="right"))
        if i >= len(cum):  # r rounded up to total
            i = int(np.flatnonzero(weights)[-1])
        return i
    pool = np.setdiff1d(np.arange(len(weights)), np.asarray(list(exclude), dtype=np.int64))
    if len(pool) == 0:
        pool = np.arange(len(weights))
    return int(pool[rng.integers(len(pool))])


def kmeanspp_init(D, k: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """k-means++ seeding.

    The first seed is uniform; each later one is drawn with probability
    proportional to the squared distance to the nearest seed chosen so far.

    Returns
    -------
    centers : ndarray of shape (k, d)
    chosen : ndarray of shape (k,)
        Row ids of the seeds when ``D`` is a DataMatrix, otherwise row
        positions in ``D``.
    """
    X = as_points(D)
    n = len(X)
    if k < 1 or k > n:
        raise ValueError(f"k={k} needs 1 <= k <= number of points ({n})")
    chosen = [int(rng.integers(n))]
    u = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        i = d2_sample(u, rng, exclude=chosen)
        chosen.append(i)
        np.minimum(u, np.sum((X - X[i]) ** 2, axis=1), out=u)
    idx = np.array(chosen, dtype=np.int64)
    centers = X[idx].copy()
    if isinstance(D, DataMatrix):
        return centers, D.live_ids()[idx]
    return centers, idx


def lloyd(D, k: int, T: int, rng: np.random.Generator, trace: list | None = None):
    """k-means++ seeding followed by at most ``T`` Lloyd rounds.

    Stops early once a round leaves the assignment unchanged. An empty
    cluster keeps its previous centroid. If ``trace`` is a list, the loss
    after seeding and after every round is appended to it.

    Returns ``(centroids, assignment)``.
    """
    X = as_points(D)
    C, _ = kmeanspp_init(X, k, rng)
    labels, mind = _nearest(X, C)
    if trace is not None:
        trace.append(float(mind.sum()))
    for _ in range(T):
        C, _ = centroids_of(X, labels, k, fill=C)
        new_labels, mind = _nearest(X, C)
        if trace is not None:
            trace.append(float(mind.sum()))
        changed = not np.array_equal(new_labels, labels)
        labels = new_labels
        if not changed:
            break
    return C, Assignment(labels, np.bincount(labels, minlength=k))


def save_centroids_csv(path, C) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for c in np.atleast_2d(C):
            w.writerow([repr(float(v)) for v in c])


def load_centroids_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])
