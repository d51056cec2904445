"""Datasets with stable row identifiers and O(1) logical deletion.

Points live in a dense ``(n, d)`` float64 array that is never compacted;
deleting a row only flips its entry in a boolean mask. Row ids are assigned
once and keep identifying the same point for the lifetime of the matrix,
which is what lets a deletion stream be replayed against a fresh copy.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed input data or an invalid row reference."""


class DataMatrix:
    """Points with stable row ids; supports logical deletion.

    Parameters
    ----------
    points : array-like of shape (n, d)
        Finite real coordinates.
    row_ids : array-like of int, optional
        Unique identifiers, default ``0..n-1``.
    """

    def __init__(self, points, row_ids=None):
        X = np.array(points, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] < 1:
            raise DataError(f"points must be 2-D with d >= 1, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("points contain non-finite values")
        n = X.shape[0]
        if row_ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.asarray(row_ids, dtype=np.int64)
            if ids.shape != (n,):
                raise DataError("row_ids must have one entry per point")
        self.X = X
        self.row_ids = ids
        self.live = np.ones(n, dtype=bool)
        self._pos = {int(r): i for i, r in enumerate(ids)}
        if len(self._pos) != n:
            raise DataError("row_ids must be unique")
        self._identity = bool(np.array_equal(ids, np.arange(n)))
        self.live_count = n

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_total(self) -> int:
        return self.X.shape[0]

    def __len__(self) -> int:
        return self.live_count

    def __repr__(self) -> str:
        return f"DataMatrix(live={self.live_count}, total={self.n_total}, d={self.d})"

    def position(self, row_id: int) -> int:
        try:
            return self._pos[int(row_id)]
        except KeyError:
            raise DataError(f"unknown row_id {row_id}") from None

    def is_live(self, row_id: int) -> bool:
        pos = self._pos.get(int(row_id))
        return pos is not None and bool(self.live[pos])

    def point(self, row_id: int) -> np.ndarray:
        """Coordinates of a live row."""
        pos = self.position(row_id)
        if not self.live[pos]:
            raise DataError(f"row_id {row_id} is deleted")
        return self.X[pos]

    def live_ids(self) -> np.ndarray:
        return self.row_ids[self.live]

    def live_points(self) -> np.ndarray:
        return self.X[self.live]

    def points_of(self, row_ids) -> np.ndarray:
        """Coordinates of the given rows (live or not), in the given order."""
        if self._identity:
            idx = np.asarray(row_ids, dtype=np.int64)
            if len(idx) and (idx.min() < 0 or idx.max() >= self.n_total):
                raise DataError("unknown row_id in request")
        else:
            idx = [self.position(r) for r in row_ids]
        return self.X[idx]

    def delete_row(self, row_id: int) -> DataMatrix:
        """Mark ``row_id`` deleted in constant time and return ``self``."""
        pos = self.position(row_id)
        if not self.live[pos]:
            raise DataError(f"row_id {row_id} already deleted")
        self.live[pos] = False
        self.live_count -= 1
        return self

    def copy(self) -> DataMatrix:
        out = DataMatrix.__new__(DataMatrix)
        out.X = self.X
        out.row_ids = self.row_ids
        out.live = self.live.copy()
        out._pos = self._pos
        out._identity = self._identity
        out.live_count = self.live_count
        return out

    def without(self, row_id: int) -> DataMatrix:
        return self.copy().delete_row(row_id)

    def fingerprint(self) -> str:
        """SHA-256 over the live row ids and their coordinates."""
        h = hashlib.sha256()
        h.update(np.int64(self.d).tobytes())
        h.update(np.ascontiguousarray(self.live_ids()).tobytes())
        h.update(np.ascontiguousarray(self.live_points()).tobytes())
        return h.hexdigest()


@dataclass
class ScaleParams:
    min: np.ndarray
    max: np.ndarray


@dataclass
class LabeledDataset:
    data: DataMatrix
    labels: np.ndarray | None = None

    def live_labels(self) -> np.ndarray | None:
        if self.labels is None:
            return None
        return self.labels[self.data.live]


@dataclass
class DeletionStream:
    row_ids: list[int]
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.row_ids)

    def __iter__(self):
        return iter(self.row_ids)

    def save(self, path) -> None:
        Path(path).write_text("".join(f"{r}\n" for r in self.row_ids))

    @classmethod
    def load(cls, path) -> DeletionStream:
        ids = [int(line) for line in Path(path).read_text().split()]
        if len(set(ids)) != len(ids):
            raise DataError("deletion stream repeats a row_id")
        return cls(ids)


def load_csv(path, has_header: bool = False, label_column: int | None = None) -> LabeledDataset:
    """Read a numeric CSV into a labeled dataset (row ids in file order)."""
    rows = []
    labels = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if has_header:
            next(reader, None)
        for r, fields in enumerate(reader):
            if not fields or all(not f.strip() for f in fields):
                continue
            if width is None:
                width = len(fields)
                if label_column is not None and not -width <= label_column < width:
                    raise DataError(f"label column {label_column} out of range for {width} columns")
            elif len(fields) != width:
                raise DataError(f"ragged row {r}: expected {width} columns, got {len(fields)}")
            lab_idx = None if label_column is None else label_column % width
            vals = []
            for c, f in enumerate(fields):
                try:
                    v = float(f)
                except ValueError:
                    raise DataError(f"parse error at row {r}, column {c}: {f!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"non-finite value at row {r}, column {c}")
                if c == lab_idx:
                    if v != int(v):
                        raise DataError(f"non-integer label at row {r}, column {c}")
                    labels.append(int(v))
                else:
                    vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if not rows[0]:
        raise DataError("no feature columns left after removing the label")
    X = np.array(rows, dtype=np.float64)
    y = np.array(labels, dtype=np.int64) if label_column is not None else None
    return LabeledDataset(DataMatrix(X), y)


def save_csv(path, data: DataMatrix, labels=None) -> None:
    """Write live rows as CSV; labels (if any) go in the last column."""
    X = data.live_points()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        for i, x in enumerate(X):
            row = [repr(float(v)) for v in x]
            if labels is not None:
                row.append(int(labels[i]))
            w.writerow(row)


def minmax_scale(D: DataMatrix) -> tuple[DataMatrix, ScaleParams]:
    """Map every dimension of the live rows affinely onto [0, 1].

    Constant dimensions map to 0. Deleted rows keep their ids and are
    scaled with the same parameters.
    """
    if D.live_count < 1:
        raise DataError("cannot scale an empty dataset")
    live = D.live_points()
    lo = live.min(axis=0)
    hi = live.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    Y = (D.X - lo) / safe
    Y[:, span == 0] = 0.0
    # (x - lo) / span can overshoot 1 by an ulp
    Y[D.live] = np.clip(Y[D.live], 0.0, 1.0)
    out = DataMatrix.__new__(DataMatrix)
    out.X = Y
    out.row_ids = D.row_ids
    out.live = D.live.copy()
    out._pos = D._pos
    out._identity = D._identity
    out.live_count = D.live_count
    return out, ScaleParams(lo, hi)


def gen_gaussian_mixture(n_per_cluster: int, d: int, k: int, variance: float, seed) -> LabeledDataset:
    """Isotropic Gaussian blobs around centers drawn uniformly in [0, 1]^d.

    Normal variates come from numpy's ``Generator.standard_normal``
    (PCG64 bit generator, ziggurat method), scaled by ``sqrt(variance)``.
    Rows are ordered cluster by cluster.
    """
    if n_per_cluster < 1 or d < 1 or k < 1:
        raise ValueError("n_per_cluster, d and k must be positive")
    if variance < 0:
        raise ValueError("variance must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.random((k, d))
    noise = rng.standard_normal((k, n_per_cluster, d)) * np.sqrt(variance)
    X = (centers[:, None, :] + noise).reshape(k * n_per_cluster, d)
    y = np.repeat(np.arange(k, dtype=np.int64), n_per_cluster)
    return LabeledDataset(DataMatrix(X), y)


def gen_deletion_stream(D: DataMatrix, m: int, seed) -> DeletionStream:
    """Sample ``m`` live row ids uniformly without replacement.

    The j-th id is uniform over rows still live after the first j-1 picks
    (a partial Fisher-Yates shuffle over the live ids).
    """
    ids = D.live_ids().copy()
    if m < 0 or m > len(ids):
        raise DataError(f"cannot draw {m} deletions from {len(ids)} live rows")
    rng = np.random.default_rng(seed)
    n = len(ids)
    for j in range(m):
        t = j + int(rng.integers(n - j))
        ids[j], ids[t] = ids[t], ids[j]
    return DeletionStream([int(r) for r in ids[:m]], seed if isinstance(seed, int) else None)
