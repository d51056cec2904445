"""Quantized k-means with a stability-verified deletion operation.

Training is Lloyd's algorithm where every centroid update is snapped to a
freshly phased ``epsilon``-lattice before re-partitioning. Each iteration's
state is memoized so a later deletion can recompute, in O(kd) per
iteration, what that iteration would have produced without the deleted
point. If every quantized centroid and every accept/stop decision comes out
the same, the model is already the retrained model and only the metadata is
updated; otherwise the model is retrained from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import _nearest, centroids_of, d2_sample, kmeanspp_init, sq_distances
from .dataset import DataError, DataMatrix
from .quantizer import boundary_margin, quantize, sample_phase

# lattice-unit distance to a rounding boundary below which a recomputed
# centroid is not trusted to quantize like a from-scratch mean would
_BOUNDARY_GUARD = 1e-9
# relative loss gap below which an accept/stop decision is not trusted
_LOSS_GUARD = 1e-9


class ReplayError(RuntimeError):
    """Recorded random choices could not be replayed on the given data."""


@dataclass
class QkParams:
    k: int
    epsilon: float
    T: int = 10
    gamma: float = 0.2
    reseed_empty: bool = True

    def __post_init__(self):
        if self.k < 1 or self.T < 1:
            raise ValueError("k and T must be >= 1")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class QkIterationRecord:
    """Memoized state of one training iteration.

    ``raw_means``/``sizes`` describe the partition induced by the centroids
    entering the iteration; ``out_sizes`` the partition induced by
    ``quantized``.
    """

    raw_means: np.ndarray
    sizes: np.ndarray
    analog_centroids: np.ndarray
    phase: np.ndarray
    quantized: np.ndarray
    out_sizes: np.ndarray
    loss_in: float
    loss_out: float
    accepted: bool
    reinit_events: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class QkModel:
    params: QkParams
    centroids: np.ndarray
    init_centroids: np.ndarray
    init_row_ids: np.ndarray
    iterations: list[QkIterationRecord]
    n_live: int
    seed: int
    retrains: int = 0

    @property
    def accepted_iteration_count(self) -> int:
        return sum(r.accepted for r in self.iterations)

    def reinit_row_ids(self) -> set[int]:
        return {row for rec in self.iterations for _, row in rec.reinit_events}

    @property
    def loss(self) -> float:
        """Training-set loss of the final centroids on the current live rows."""
        accepted = [r for r in self.iterations if r.accepted]
        if accepted:
            return accepted[-1].loss_out
        return self.iterations[0].loss_in

    def to_dict(self) -> dict:
        return {
            "params": {
                "k": self.params.k,
                "epsilon": self.params.epsilon,
                "T": self.params.T,
                "gamma": self.params.gamma,
                "reseed_empty": self.params.reseed_empty,
            },
            "centroids": self.centroids.tolist(),
            "init_centroids": self.init_centroids.tolist(),
            "init_row_ids": [int(r) for r in self.init_row_ids],
            "n_live": self.n_live,
            "seed": self.seed,
            "retrains": self.retrains,
            "iterations": [
                {
                    "raw_means": r.raw_means.tolist(),
                    "sizes": r.sizes.tolist(),
                    "analog_centroids": r.analog_centroids.tolist(),
                    "phase": r.phase.tolist(),
                    "quantized": r.quantized.tolist(),
                    "out_sizes": r.out_sizes.tolist(),
                    "loss_in": r.loss_in,
                    "loss_out": r.loss_out,
                    "accepted": r.accepted,
                    "reinit_events": [list(e) for e in r.reinit_events],
                }
                for r in self.iterations
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> QkModel:
        arr = lambda v: np.array(v, dtype=np.float64)  # noqa: E731
        its = [
            QkIterationRecord(
                raw_means=arr(r["raw_means"]),
                sizes=np.array(r["sizes"], dtype=np.int64),
                analog_centroids=arr(r["analog_centroids"]),
                phase=arr(r["phase"]),
                quantized=arr(r["quantized"]),
                out_sizes=np.array(r["out_sizes"], dtype=np.int64),
                loss_in=float(r["loss_in"]),
                loss_out=float(r["loss_out"]),
                accepted=bool(r["accepted"]),
                reinit_events=[(int(a), int(b)) for a, b in r["reinit_events"]],
            )
            for r in d["iterations"]
        ]
        return cls(
            params=QkParams(**d["params"]),
            centroids=arr(d["centroids"]),
            init_centroids=arr(d["init_centroids"]),
            init_row_ids=np.array(d["init_row_ids"], dtype=np.int64),
            iterations=its,
            n_live=int(d["n_live"]),
            seed=int(d["seed"]),
            retrains=int(d["retrains"]),
        )


def gamma_correct(c, c_prev, sizes, gamma: float, n_live: int, k: int, exempt=None) -> np.ndarray:
    """Pull centroids of under-populated clusters toward their previous value.

    A cluster with ``size < gamma * n_live / k`` is replaced by the convex
    combination ``(size * c + (g - size) * c_prev) / g`` with
    ``g = gamma * n_live / k``. Clusters flagged in ``exempt`` are left alone.
    """
    c = np.array(c, dtype=np.float64)
    sizes = np.asarray(sizes)
    g = gamma * n_live / k
    weak = sizes < g
    if exempt is not None:
        weak &= ~np.asarray(exempt, dtype=bool)
    if weak.any():
        s = sizes[weak, None].astype(np.float64)
        c[weak] = (s * c[weak] + (g - s) * np.asarray(c_prev)[weak]) / g
    return c


@dataclass
class _Replay:
    """Recorded random choices to reuse. Reseeds left as None, and phases
    past the recorded ones, are drawn from the ``rng`` passed to ``_fit``."""

    init_row_ids: np.ndarray
    phases: list[np.ndarray]
    reseeds: dict[tuple[int, int], int] | None


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng)), int(rng)
    return np.random.default_rng(rng), None


def _fit(D: DataMatrix, p: QkParams, rng, replay: _Replay | None = None, resume=None):
    """Run training; returns ``(centroids, init_centroids, init_ids, records)``.

    ``resume = (records, c)`` continues a replay after the given records,
    from the centroid set ``c`` that entered the next iteration.
    """
    X = D.live_points()
    ids = D.live_ids()
    n, k = len(X), p.k
    if k > n:
        raise ValueError(f"k={k} exceeds the number of live rows ({n})")
    if replay is None:
        c, init_ids = kmeanspp_init(D, k, rng)
    else:
        init_ids = np.asarray(replay.init_row_ids, dtype=np.int64)
        c = D.points_of(init_ids).copy()
    init_c = c.copy()
    records = []
    if resume is not None:
        records, c = list(resume[0]), resume[1]
    labels, mind = _nearest(X, c)
    L = float(mind.sum())
    pos_of = {int(r): i for i, r in enumerate(ids)} if replay is not None and replay.reseeds is not None else None
    for tau in range(len(records), p.T):
        sizes = np.bincount(labels, minlength=k)
        means, empty = centroids_of(X, labels, k, fill=c)
        reinit = []
        if empty.any() and p.reseed_empty:
            filled = ~empty
            for j in np.flatnonzero(empty):
                if pos_of is None:
                    u = sq_distances(X, means[filled]).min(axis=1) if filled.any() else np.ones(n)
                    i = d2_sample(u, rng)
                else:
                    try:
                        i = pos_of[replay.reseeds[(tau, int(j))]]
                    except KeyError:
                        raise ReplayError(f"no recorded reseed for iteration {tau}, cluster {j}") from None
                means[j] = X[i]
                filled[j] = True
                reinit.append((int(j), int(ids[i])))
        exempt = np.zeros(k, dtype=bool)
        exempt[[j for j, _ in reinit]] = True
        analog = gamma_correct(means, c, sizes, p.gamma, n, k, exempt=exempt)
        if replay is not None and tau < len(replay.phases):
            theta = replay.phases[tau]
        elif replay is None or rng is not None:
            theta = sample_phase(X.shape[1], rng)
        else:
            raise ReplayError(f"replay ran past the {len(replay.phases)} recorded phases")
        q = quantize(analog, p.epsilon, theta)
        new_labels, mind = _nearest(X, q)
        L_new = float(mind.sum())
        accepted = L_new < L
        records.append(
            QkIterationRecord(
                raw_means=means,
                sizes=sizes,
                analog_centroids=analog,
                phase=np.asarray(theta, dtype=np.float64),
                quantized=q,
                out_sizes=np.bincount(new_labels, minlength=k),
                loss_in=L,
                loss_out=L_new,
                accepted=accepted,
                reinit_events=reinit,
            )
        )
        if not accepted:
            break
        c, labels, L = q, new_labels, L_new
    return c, init_c, np.asarray(init_ids, dtype=np.int64), records


def qkmeans_train(D: DataMatrix, params: QkParams, rng=None) -> QkModel:
    """Train quantized k-means on the live rows of ``D``.

    ``rng`` may be a Generator, an integer seed or None. The k-means++
    seeding consumes the stream exactly like :func:`delkmeans.core.lloyd`,
    so both see the same seeds for the same generator state. Retrains
    triggered by deletions draw from streams derived from ``model.seed``.
    """
    gen, seed = _as_rng(rng)
    c, init_c, init_ids, records = _fit(D, params, gen)
    if seed is None:
        seed = int(gen.integers(2**63))
    return QkModel(params, c, init_c, init_ids, records, D.live_count, seed)


def qkmeans_replay(D: DataMatrix, model: QkModel) -> QkModel:
    """Retrain on ``D`` reusing the model's recorded seeds, phases and reseeds."""
    replay = _Replay(
        init_row_ids=model.init_row_ids,
        phases=[r.phase for r in model.iterations],
        reseeds={(tau, j): row for tau, r in enumerate(model.iterations) for j, row in r.reinit_events},
    )
    c, init_c, init_ids, records = _fit(D, model.params, None, replay)
    return QkModel(model.params, c, init_c, init_ids, records, D.live_count, model.seed, model.retrains)


def _near_tie(dist: np.ndarray) -> bool:
    # the training pass may have broken a near-tie the other way
    if len(dist) < 2:
        return False
    a, b = np.partition(dist, 1)[:2]
    return b - a <= _LOSS_GUARD * max(b, 1e-300)


def _verify_iteration(rec: QkIterationRecord, c_in: np.ndarray, x: np.ndarray, n_new: int, p: QkParams):
    """Recompute one memoized iteration without point ``x``.

    Returns the downdated record fields, or None when the iteration's
    outcome could differ from a retrain.
    """
    k = p.k
    if rec.reinit_events:
        # the reseed draw was weighted by means that included x
        return None
    d_in = np.sum((c_in - x) ** 2, axis=1)
    kap = int(np.argmin(d_in))
    if _near_tie(d_in):
        return None
    s = int(rec.sizes[kap])
    if s <= 1:
        return None
    means = rec.raw_means.copy()
    sizes = rec.sizes.copy()
    means[kap] = (s * means[kap] - x) / (s - 1)
    sizes[kap] -= 1
    exempt = np.zeros(k, dtype=bool)
    exempt[[j for j, _ in rec.reinit_events]] = True
    analog = gamma_correct(means, c_in, sizes, p.gamma, n_new, k, exempt=exempt)
    q = quantize(analog, p.epsilon, rec.phase)
    if not np.array_equal(q, rec.quantized):
        return None
    moved = np.any(analog != rec.analog_centroids, axis=1)
    if moved.any() and boundary_margin(analog[moved], p.epsilon, rec.phase).min() < _BOUNDARY_GUARD:
        return None
    d_out = np.sum((rec.quantized - x) ** 2, axis=1)
    if _near_tie(d_out):
        return None
    loss_in = rec.loss_in - float(d_in[kap])
    loss_out = rec.loss_out - float(d_out.min())
    if not np.array_equal(rec.quantized, c_in):
        if (loss_out < loss_in) != rec.accepted:
            return None
        if abs(loss_out - loss_in) <= _LOSS_GUARD * max(abs(loss_in), 1e-300):
            return None
    out_sizes = rec.out_sizes.copy()
    out_sizes[int(np.argmin(d_out))] -= 1
    return means, sizes, analog, out_sizes, loss_in, loss_out


def qkmeans_delete(model: QkModel, D: DataMatrix, row_id: int) -> tuple[QkModel, bool]:
    """Delete ``row_id`` from ``D`` and from the model.

    Returns ``(model, retrained)``. When the memoized state certifies that
    the model is unchanged by the deletion, the records are updated in
    place and the centroids are left bit-identical. Otherwise the model is
    retrained on the remaining rows: from scratch if ``row_id`` was a
    k-means++ seed, else reusing the recorded seeds and phases.
    """
    if not D.is_live(row_id):
        raise DataError(f"row_id {row_id} is not live")
    if D.live_count != model.n_live:
        raise DataError(f"model was trained on {model.n_live} rows, dataset has {D.live_count}")
    x = D.point(row_id)
    row_id = int(row_id)
    is_seed = row_id in set(model.init_row_ids.tolist())
    staged = []
    c_in = model.init_centroids
    if not is_seed and row_id not in model.reinit_row_ids():
        for rec in model.iterations:
            upd = _verify_iteration(rec, c_in, x, model.n_live - 1, model.params)
            if upd is None:
                break
            staged.append(upd)
            c_in = rec.quantized
    D.delete_row(row_id)
    stable = not is_seed and len(staged) == len(model.iterations)
    for rec, upd in zip(model.iterations, staged):
        rec.raw_means, rec.sizes, rec.analog_centroids, rec.out_sizes, rec.loss_in, rec.loss_out = upd
    if not stable:
        rng = np.random.default_rng([model.seed, model.retrains + 1])
        replay = resume = None
        if not is_seed:
            # Same seeds and phases as the memoized run: the seeds are
            # distributed as seeding without x would be, so this keeps the
            # output exactly distributed as a retrain on the reduced data.
            # Iterations already verified are identical and are kept.
            replay = _Replay(model.init_row_ids, [r.phase for r in model.iterations], None)
            resume = (model.iterations[: len(staged)], c_in)
        c, init_c, init_ids, records = _fit(D, model.params, rng, replay, resume)
        fresh = QkModel(model.params, c, init_c, init_ids, records, D.live_count, model.seed, model.retrains + 1)
        return fresh, True
    model.n_live -= 1
    return model, False
