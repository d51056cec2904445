"""Versioned JSON model files bound to the dataset they were trained on.

A model file records which rows of the source dataset have been deleted
and a fingerprint of the rows still live. Loading it against a dataset
re-applies those deletions and refuses to continue if the fingerprint no
longer matches, which catches a stale model paired with edited data.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DataError, DataMatrix
from .dckmeans import DcModel
from .qkmeans import QkModel

MODEL_FORMAT = "delkmeans.model/1"


class FingerprintError(DataError):
    """Model file and dataset disagree on the live rows."""


@dataclass
class LloydModel:
    """Plain Lloyd's k-means output; deletion means retraining."""

    k: int
    T: int
    centroids: np.ndarray
    seed: int
    retrains: int = 0

    def to_dict(self) -> dict:
        return {"k": self.k, "T": self.T, "centroids": self.centroids.tolist(), "seed": self.seed, "retrains": self.retrains}

    @classmethod
    def from_dict(cls, d: dict) -> LloydModel:
        C = np.array(d["centroids"], dtype=np.float64)
        return cls(int(d["k"]), int(d["T"]), C, int(d["seed"]), int(d["retrains"]))


_KINDS = {"qkmeans": QkModel, "dckmeans": DcModel, "lloyd": LloydModel}


def model_kind(model) -> str:
    for name, cls in _KINDS.items():
        if isinstance(model, cls):
            return name
    raise TypeError(f"not a model: {type(model).__name__}")


@dataclass
class ModelFile:
    model: object
    fingerprint: str
    deleted_row_ids: list[int] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return model_kind(self.model)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "kind": self.kind,
            "fingerprint": self.fingerprint,
            "deleted_row_ids": [int(r) for r in self.deleted_row_ids],
            "model": self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ModelFile:
        if d.get("format") != MODEL_FORMAT:
            raise DataError(f"unsupported model format {d.get('format')!r}")
        kind = d.get("kind")
        if kind not in _KINDS:
            raise DataError(f"unknown model kind {kind!r}")
        return cls(_KINDS[kind].from_dict(d["model"]), d["fingerprint"], list(d["deleted_row_ids"]))

    def bind(self, D: DataMatrix) -> DataMatrix:
        """Apply the recorded deletions to ``D`` and check the fingerprint."""
        for r in self.deleted_row_ids:
            if not D.is_live(r):
                raise FingerprintError(f"recorded deletion {r} is not a live row of the dataset")
            D.delete_row(r)
        if D.fingerprint() != self.fingerprint:
            raise FingerprintError("dataset does not match the model's fingerprint")
        return D


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(path, mf: ModelFile) -> None:
    atomic_write_text(path, json.dumps(mf.to_dict()))


def load_model(path) -> ModelFile:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not a model file ({e})") from None
    return ModelFile.from_dict(d)
