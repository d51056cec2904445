"""Online deletion benchmark: train once, then serve a stream of deletions.

Only algorithm work is timed. Stream generation, quality evaluation and
report bookkeeping happen with the clock stopped.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import ks_2samp

from .core import assign, kmeans_loss, lloyd
from .dataset import DataMatrix, LabeledDataset, gen_deletion_stream
from .dckmeans import DcParams, dckmeans_delete, dckmeans_train
from .metrics import QualityReport, loss_ratio, nmi, silhouette
from .qkmeans import QkParams, qkmeans_delete, qkmeans_train

REPORT_SCHEMA = "delkmeans.bench/1"
CSV_HEADER = ["replicate", "index", "row_id", "seconds", "cumulative_amortized", "retrained"]
ALGORITHMS = ("baseline", "qkmeans", "dckmeans", "noop")
DEFAULT_CHECKPOINTS = (1, 10, 100, 1000)
# iteration cap standing in for "run to convergence" in reference losses
CONVERGED_T = 300


@dataclass
class BenchConfig:
    algorithm: str
    m: int
    k: int
    T: int = 10
    epsilon: float | None = None
    gamma: float = 0.2
    width: int | None = None
    height: int = 1
    stream_seed: int = 0
    train_seed: int = 0
    eval_seed: int = 0
    checkpoints: tuple[int, ...] | None = None
    replicates: int = 5
    silhouette_cap: int = 10_000
    parallel: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.m < 1 or self.replicates < 1:
            raise ValueError("m and replicates must be >= 1")
        if self.checkpoints is None:
            self.checkpoints = tuple(c for c in DEFAULT_CHECKPOINTS if c <= self.m)
        else:
            cps = tuple(sorted(set(int(c) for c in self.checkpoints)))
            if cps and (cps[0] < 1 or cps[-1] > self.m):
                raise ValueError(f"checkpoints must lie in [1, {self.m}]")
            self.checkpoints = cps
        if self.algorithm == "qkmeans" and self.epsilon is None:
            raise ValueError("qkmeans needs epsilon")
        if self.algorithm == "dckmeans" and self.width is None:
            raise ValueError("dckmeans needs width")


# -- algorithm adapters -------------------------------------------------------


class BaselineAdapter:
    """Lloyd's algorithm; every deletion is a retrain from scratch."""

    def __init__(self, cfg: BenchConfig, seed):
        self.k, self.T = cfg.k, cfg.T
        self.rng = np.random.default_rng(seed)
        self.centroids = None

    def train(self, D):
        self.centroids, _ = lloyd(D, self.k, self.T, self.rng)

    def delete(self, D, row_id) -> bool:
        D.delete_row(row_id)
        self.train(D)
        return True


class QkAdapter:
    def __init__(self, cfg: BenchConfig, seed):
        self.params = QkParams(cfg.k, cfg.epsilon, cfg.T, cfg.gamma)
        self.seed = seed
        self.model = None

    @property
    def centroids(self):
        return self.model.centroids

    def train(self, D):
        self.model = qkmeans_train(D, self.params, np.random.default_rng(self.seed))

    def delete(self, D, row_id) -> bool:
        self.model, retrained = qkmeans_delete(self.model, D, row_id)
        return retrained


class DcAdapter:
    def __init__(self, cfg: BenchConfig, seed):
        self.params = DcParams(cfg.k, cfg.width, cfg.height, cfg.T)
        self.seed = seed
        self.model = None

    @property
    def centroids(self):
        return self.model.centroids

    def train(self, D):
        self.model = dckmeans_train(D, self.params, np.random.default_rng(self.seed))

    def delete(self, D, row_id) -> bool:
        self.model, retrained = dckmeans_delete(self.model, D, row_id)
        return retrained


class NoopAdapter:
    """Does no learning at all; measures what the harness itself costs."""

    def __init__(self, cfg: BenchConfig, seed):
        self.centroids = None

    def train(self, D):
        self.centroids = D.X[:1].copy()

    def delete(self, D, row_id) -> bool:
        D.delete_row(row_id)
        return False


_ADAPTERS = {"baseline": BaselineAdapter, "qkmeans": QkAdapter, "dckmeans": DcAdapter, "noop": NoopAdapter}


# -- reports ------------------------------------------------------------------


@dataclass
class RunResult:
    replicate: int
    train_seconds: float
    row_ids: list[int]
    delete_seconds: list[float]
    retrain_events: list[int]
    quality: dict[int, QualityReport] = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.delete_seconds)

    @property
    def amortized_total(self) -> float:
        return (self.train_seconds + math.fsum(self.delete_seconds)) / self.m

    def cumulative_amortized(self) -> np.ndarray:
        j = np.arange(1, self.m + 1)
        return (self.train_seconds + np.cumsum(self.delete_seconds)) / j


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


@dataclass
class BenchReport:
    algorithm: str
    n: int
    d: int
    m: int
    config: dict
    runs: list[RunResult]
    reference: str = "converged-lloyd"

    @property
    def amortized(self) -> tuple[float, float]:
        return _mean_std([r.amortized_total for r in self.runs])

    def quality_summary(self) -> dict[int, dict[str, tuple[float, float]]]:
        out = {}
        for cp in self.config["checkpoints"]:
            reps = [r.quality[cp] for r in self.runs if cp in r.quality]
            if reps:
                out[cp] = {
                    key: _mean_std([getattr(q, key) for q in reps]) for key in ("loss", "loss_ratio", "silhouette", "nmi")
                }
        return out

    def to_dict(self) -> dict:
        mean, std = self.amortized
        out = {
            "schema": REPORT_SCHEMA,
            "algorithm": self.algorithm,
            "n": self.n,
            "d": self.d,
            "m": self.m,
            "config": self.config,
            "reference": self.reference,
            "amortized_mean": mean,
            "amortized_std": std,
            "runs": [
                {
                    "replicate": r.replicate,
                    "train_seconds": r.train_seconds,
                    "amortized_total": r.amortized_total,
                    "row_ids": r.row_ids,
                    "delete_seconds": r.delete_seconds,
                    "retrain_events": r.retrain_events,
                    **({"quality": {str(cp): q.to_dict() for cp, q in r.quality.items()}} if r.quality else {}),
                }
                for r in self.runs
            ],
        }
        summary = self.quality_summary()
        if summary:
            out["quality_summary"] = {
                str(cp): {key: {"mean": mv, "std": sv} for key, (mv, sv) in stats.items()} for cp, stats in summary.items()
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> BenchReport:
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        runs = [
            RunResult(
                replicate=r["replicate"],
                train_seconds=r["train_seconds"],
                row_ids=list(r["row_ids"]),
                delete_seconds=list(r["delete_seconds"]),
                retrain_events=list(r["retrain_events"]),
                quality={int(cp): QualityReport(**q) for cp, q in r.get("quality", {}).items()},
            )
            for r in d["runs"]
        ]
        return cls(d["algorithm"], d["n"], d["d"], d["m"], d["config"], runs, d.get("reference", "converged-lloyd"))


def emit_report(report: BenchReport, fmt: str, path) -> None:
    """Write ``report`` as versioned JSON or as plot-ready CSV.

    The CSV has one row per deletion request per replicate with columns
    ``replicate,index,row_id,seconds,cumulative_amortized,retrained``.
    """
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=1)
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in report.runs:
                events = set(r.retrain_events)
                for j, (row, sec, cum) in enumerate(zip(r.row_ids, r.delete_seconds, r.cumulative_amortized()), 1):
                    w.writerow([r.replicate, j, row, repr(sec), repr(float(cum)), int(j in events)])
    else:
        raise ValueError(f"unknown report format {fmt!r}")


# -- the benchmark -------------------------------------------------------------


def reference_loss(D: DataMatrix, k: int, seed) -> float:
    """Loss of Lloyd's algorithm run to convergence on the live rows."""
    C, _ = lloyd(D, k, CONVERGED_T, np.random.default_rng(seed))
    return kmeans_loss(D, C)


def evaluate_quality(dataset: LabeledDataset, D: DataMatrix, C, k: int, reference: float, cap: int, seed) -> QualityReport:
    a = assign(D, C)
    loss = kmeans_loss(D, C)
    try:
        sil = silhouette(D, a, cap, np.random.default_rng(seed))
    except ValueError:
        sil = float("nan")
    truth = dataset.labels[D.live] if dataset.labels is not None else None
    score = nmi(a.labels, truth) if truth is not None else float("nan")
    return QualityReport(loss, loss_ratio(loss, reference), sil, score, seed)


def run_benchmark(dataset: LabeledDataset, cfg: BenchConfig, references: dict | None = None) -> BenchReport:
    """Run ``cfg.replicates`` replicates of the online deletion benchmark.

    ``references`` caches converged-baseline losses keyed by
    ``(replicate, checkpoint)`` so several algorithms on the same streams
    share them; it is filled in as needed.
    """
    base = dataset.data
    if cfg.m > base.live_count:
        raise ValueError(f"m={cfg.m} exceeds the {base.live_count} live rows")
    if cfg.k > base.live_count - cfg.m:
        raise ValueError("k exceeds the rows left after all deletions")
    references = {} if references is None else references
    checkpoints = set(cfg.checkpoints)
    runs = []
    for rep in range(cfg.replicates):
        D = base.copy()
        stream = gen_deletion_stream(D, cfg.m, [cfg.stream_seed, rep])
        adapter = _ADAPTERS[cfg.algorithm](cfg, [cfg.train_seed, rep])
        t0 = time.perf_counter()
        adapter.train(D)
        train_s = time.perf_counter() - t0
        secs, events, quality = [], [], {}
        for j, row in enumerate(stream.row_ids, 1):
            t0 = time.perf_counter()
            retrained = adapter.delete(D, row)
            secs.append(time.perf_counter() - t0)
            if retrained:
                events.append(j)
            if j in checkpoints and cfg.algorithm != "noop":
                key = (rep, j)
                if key not in references:
                    references[key] = reference_loss(D, cfg.k, [cfg.eval_seed, rep, j])
                quality[j] = evaluate_quality(
                    dataset, D, adapter.centroids, cfg.k, references[key], cfg.silhouette_cap, cfg.eval_seed
                )
        runs.append(RunResult(rep, train_s, list(stream.row_ids), secs, events, quality))
    config = asdict(cfg)
    config["checkpoints"] = list(cfg.checkpoints)
    return BenchReport(cfg.algorithm, base.live_count, base.d, cfg.m, config, runs)


# -- distributional deletion check --------------------------------------------


@dataclass
class DeletionAlgorithm:
    """Train/delete pair checked by :func:`deletion_equality_test`.

    ``train(D, seed)`` returns a model, ``delete(model, D, row_id)`` returns
    the updated model (deleting the row from ``D``), and ``centroids(model)``
    extracts the output.
    """

    name: str
    train: Callable
    delete: Callable
    centroids: Callable


def baseline_algorithm(k: int, T: int = 10) -> DeletionAlgorithm:
    """Lloyd's algorithm; deletion retrains with fresh randomness."""

    def train(D, seed):
        rng = np.random.default_rng(seed)
        return {"centroids": lloyd(D, k, T, rng)[0], "rng": rng}

    def delete(model, D, row_id):
        D.delete_row(row_id)
        return {"centroids": lloyd(D, k, T, model["rng"])[0], "rng": model["rng"]}

    return DeletionAlgorithm("baseline", train, delete, lambda m: m["centroids"])


def qkmeans_algorithm(params: QkParams) -> DeletionAlgorithm:
    return DeletionAlgorithm(
        "qkmeans",
        lambda D, seed: qkmeans_train(D, params, np.random.default_rng(seed)),
        lambda model, D, row: qkmeans_delete(model, D, row)[0],
        lambda model: model.centroids,
    )


def dckmeans_algorithm(params: DcParams) -> DeletionAlgorithm:
    return DeletionAlgorithm(
        "dckmeans",
        lambda D, seed: dckmeans_train(D, params, np.random.default_rng(seed)),
        lambda model, D, row: dckmeans_delete(model, D, row)[0],
        lambda model: model.centroids,
    )


@dataclass
class EqualityVerdict:
    passed: bool
    statistics: dict[str, float]
    pvalues: dict[str, float]
    threshold: float
    trials: int


def _fingerprint(C: np.ndarray) -> np.ndarray:
    C = np.asarray(C)
    order = np.lexsort(C.T[::-1])
    return C[order].ravel()


def _compare(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    if np.all(a == a[0]) and np.all(b == b[0]):
        same = a[0] == b[0]
        return (0.0, 1.0) if same else (1.0, 0.0)
    res = ks_2samp(a, b, method="exact")
    return float(res.statistic), float(res.pvalue)


def deletion_equality_test(
    algorithm: DeletionAlgorithm,
    dataset,
    row_id: int,
    trials: int = 2000,
    significance: float = 0.01,
    seed: int = 0,
) -> EqualityVerdict:
    """Compare train-then-delete against train-without-the-row in distribution.

    Runs ``trials`` independent pipelines of each kind and applies the
    two-sample Kolmogorov-Smirnov test to the final loss (on the reduced
    data) and to every coordinate of the sorted centroid set. The verdict
    fails if any test rejects at ``significance`` after a Bonferroni
    correction over all tests.
    """
    D0 = dataset.data if isinstance(dataset, LabeledDataset) else dataset
    reduced = D0.without(row_id)
    seeds = np.random.default_rng(seed).integers(2**62, size=(2, trials))
    losses = np.empty((2, trials))
    prints = []
    for t in range(trials):
        D = D0.copy()
        model = algorithm.train(D, int(seeds[0, t]))
        model = algorithm.delete(model, D, row_id)
        C = algorithm.centroids(model)
        losses[0, t] = kmeans_loss(reduced, C)
        prints.append(_fingerprint(C))
    fp_deleted = np.array(prints)
    prints = []
    for t in range(trials):
        D = reduced.copy()
        C = algorithm.centroids(algorithm.train(D, int(seeds[1, t])))
        losses[1, t] = kmeans_loss(reduced, C)
        prints.append(_fingerprint(C))
    fp_retrained = np.array(prints)
    stats, pvals = {}, {}
    stats["loss"], pvals["loss"] = _compare(losses[0], losses[1])
    if fp_deleted.shape == fp_retrained.shape:
        for i in range(fp_deleted.shape[1]):
            stats[f"coord{i}"], pvals[f"coord{i}"] = _compare(fp_deleted[:, i], fp_retrained[:, i])
    else:
        stats["shape"], pvals["shape"] = 1.0, 0.0
    threshold = significance / len(pvals)
    passed = all(p >= threshold for p in pvals.values())
    return EqualityVerdict(passed, stats, pvals, threshold, trials)
