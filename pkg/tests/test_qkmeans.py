import copy
import json

import numpy as np
import pytest

from delkmeans.core import kmeans_loss, lloyd
from delkmeans.dataset import DataError, DataMatrix, gen_gaussian_mixture
from delkmeans.qkmeans import (
    QkModel,
    QkParams,
    ReplayError,
    gamma_correct,
    qkmeans_delete,
    qkmeans_replay,
    qkmeans_train,
)
from delkmeans.quantizer import quantize


def blobs(n_per, centers, scale, seed):
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=float)
    X = np.concatenate([c + scale * rng.normal(size=(n_per, len(c))) for c in centers])
    return DataMatrix(X)


def test_gamma_correct_examples():
    c, prev = np.array([[2.0]]), np.array([[0.0]])
    # gamma * n / k = 0.2 * 100 / 1 = 20
    assert gamma_correct(c, prev, [10], 0.2, 100, 1)[0, 0] == 1.0
    assert gamma_correct(c, prev, [20], 0.2, 100, 1)[0, 0] == 2.0
    assert gamma_correct(c, prev, [0], 0.2, 100, 1)[0, 0] == 0.0
    assert gamma_correct(c, prev, [10], 0.2, 100, 1, exempt=[True])[0, 0] == 2.0


def test_params_validation():
    with pytest.raises(ValueError):
        QkParams(0, 0.1)
    with pytest.raises(ValueError):
        QkParams(2, 0.0)


def test_train_basic_invariants():
    D = blobs(100, [[0, 0], [5, 5], [0, 5]], 0.5, 0)
    p = QkParams(3, 0.1, T=10)
    m = qkmeans_train(D, p, 1)
    assert 1 <= len(m.iterations) <= p.T
    assert m.n_live == 300 and m.seed == 1
    acc = [r for r in m.iterations if r.accepted]
    assert len(acc) == m.accepted_iteration_count
    last = acc[-1]
    np.testing.assert_array_equal(m.centroids, last.quantized)
    np.testing.assert_array_equal(quantize(m.centroids, p.epsilon, last.phase), m.centroids)
    assert abs(m.loss - kmeans_loss(D, m.centroids)) <= 1e-9 * m.loss
    losses = [m.iterations[0].loss_in] + [r.loss_out for r in acc]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_T1_loop_bound():
    D = blobs(50, [[0, 0], [3, 3]], 1.0, 1)
    m = qkmeans_train(D, QkParams(2, 0.05, T=1), 2)
    assert len(m.iterations) == 1
    rec = m.iterations[0]
    want = rec.quantized if rec.accepted else m.init_centroids
    np.testing.assert_array_equal(m.centroids, want)


def test_seeded_training_is_deterministic():
    D = blobs(80, [[0, 0], [4, 0]], 1.0, 2)
    a = qkmeans_train(D, QkParams(2, 0.05), 11)
    b = qkmeans_train(D, QkParams(2, 0.05), 11)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_tiny_epsilon_matches_lloyd():
    D = blobs(200, [[0, 0], [10, 0], [0, 10]], 1.0, 3)
    m = qkmeans_train(D, QkParams(3, 1e-12, T=50), np.random.default_rng(5))
    C, _ = lloyd(D, 3, 50, np.random.default_rng(5))
    base = kmeans_loss(D, C)
    assert abs(kmeans_loss(D, m.centroids) - base) <= 1e-6 * base


def test_replay_reproduces_training():
    D = blobs(100, [[0, 0], [4, 1]], 1.0, 4)
    m = qkmeans_train(D, QkParams(2, 0.05), 3)
    r = qkmeans_replay(D, m)
    np.testing.assert_array_equal(r.centroids, m.centroids)
    assert len(r.iterations) == len(m.iterations)


def test_replay_needs_recorded_phases():
    D = blobs(100, [[0, 0], [4, 1]], 1.0, 4)
    m = qkmeans_train(D, QkParams(2, 0.05), 3)
    m.iterations = m.iterations[:0]
    with pytest.raises(ReplayError):
        qkmeans_replay(D, m)


def test_stable_deletion_in_large_cluster():
    D = blobs(10_000, [[0.2, 0.2], [0.8, 0.8]], 0.05, 5)
    m = qkmeans_train(D, QkParams(2, 2**-5), 9)
    before = m.centroids.copy()
    seeds = set(m.init_row_ids.tolist())
    row = next(r for r in range(10, 100) if r not in seeds)
    m2, retrained = qkmeans_delete(m, D, row)
    assert not retrained
    np.testing.assert_array_equal(m2.centroids, before)
    assert m2.n_live == 19_999 and not D.is_live(row)
    np.testing.assert_array_equal(qkmeans_replay(D, m2).centroids, before)


def test_deleting_seed_forces_retrain():
    D = blobs(100, [[0, 0], [4, 4]], 0.5, 6)
    m = qkmeans_train(D, QkParams(2, 0.05), 1)
    seed_row = int(m.init_row_ids[0])
    m2, retrained = qkmeans_delete(m, D, seed_row)
    assert retrained and m2.retrains == 1
    assert seed_row not in m2.init_row_ids.tolist()
    assert m2.n_live == 199


def test_straddling_pair_forces_retrain():
    rng = np.random.default_rng(7)
    X = np.concatenate([rng.normal(scale=0.1, size=(200, 2)), [[10.0, 0.0], [10.0, 1.0]]])
    D = DataMatrix(X)
    p = QkParams(2, 2**-5)
    m = qkmeans_train(D, p, 3)
    seeds = m.init_row_ids.tolist()
    assert 200 in seeds or 201 in seeds
    victim = 201 if 200 in seeds else 200
    # what the model would be without the victim, same random choices
    replayed = qkmeans_replay(D.without(victim), m)
    assert not np.array_equal(replayed.centroids, m.centroids)
    m2, retrained = qkmeans_delete(m, D, victim)
    assert retrained
    # a non-seed deletion keeps the seeds and resumes the recorded run
    assert m2.init_row_ids.tolist() == seeds
    np.testing.assert_array_equal(qkmeans_replay(D, m2).centroids, m2.centroids)


def test_resumed_retrains_match_full_replay():
    rng = np.random.default_rng(10)
    checked = 0
    for trial in range(15):
        D = DataMatrix(rng.random((150, 3)))
        m = qkmeans_train(D, QkParams(3, 0.02), trial)
        for row in rng.choice(150, 6, replace=False):
            seeds = m.init_row_ids.tolist()
            m, retrained = qkmeans_delete(m, D, int(row))
            if retrained and int(row) not in seeds:
                checked += 1
                full = qkmeans_replay(D, m)
                np.testing.assert_array_equal(full.centroids, m.centroids)
                for a, b in zip(full.iterations, m.iterations):
                    np.testing.assert_array_equal(a.quantized, b.quantized)
                    assert a.accepted == b.accepted
    assert checked > 0


def test_stable_deletions_match_replay_on_random_instances():
    rng = np.random.default_rng(8)
    stable = 0
    for trial in range(20):
        n = int(rng.integers(100, 400))
        D = DataMatrix(rng.random((n, 2)))
        m = qkmeans_train(D, QkParams(3, 0.05), trial)
        for row in rng.choice(n, 5, replace=False):
            m, retrained = qkmeans_delete(m, D, int(row))
            if not retrained:
                stable += 1
                np.testing.assert_array_equal(qkmeans_replay(D, m).centroids, m.centroids)
            assert m.n_live == D.live_count
    assert stable > 0


def test_retrain_is_reproducible():
    D = blobs(50, [[0, 0], [3, 3]], 0.5, 9)
    m = qkmeans_train(D, QkParams(2, 0.05), 4)
    row = int(m.init_row_ids[1])
    a, _ = qkmeans_delete(copy.deepcopy(m), D.copy(), row)
    b, _ = qkmeans_delete(copy.deepcopy(m), D.copy(), row)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def test_delete_checks_consistency():
    D = blobs(50, [[0, 0], [3, 3]], 0.5, 9)
    m = qkmeans_train(D, QkParams(2, 0.05), 4)
    E = D.without(0)
    with pytest.raises(DataError):
        qkmeans_delete(m, E, 1)
    with pytest.raises(DataError):
        qkmeans_delete(m, D, 10_000)


def test_model_dict_round_trip_is_exact():
    ds = gen_gaussian_mixture(100, 3, 3, 0.1, seed=0)
    m = qkmeans_train(ds.data, QkParams(3, 0.02), 5)
    back = QkModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert back.to_dict() == m.to_dict()
    np.testing.assert_array_equal(back.centroids, m.centroids)


def test_k_larger_than_data():
    with pytest.raises(ValueError):
        qkmeans_train(DataMatrix(np.zeros((2, 1))), QkParams(3, 0.1), 0)
