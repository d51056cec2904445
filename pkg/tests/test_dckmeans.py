import copy
import json

import numpy as np
import pytest

from delkmeans.core import lloyd
from delkmeans.dataset import DataError, DataMatrix, gen_gaussian_mixture
from delkmeans.dckmeans import DcModel, DcParams, dckmeans_delete, dckmeans_train


def data(n, d=2, seed=0):
    return DataMatrix(np.random.default_rng(seed).random((n, d)))


def test_width_rounds_to_power_of_two():
    assert DcParams(2, 6).width == 8
    assert DcParams(2, 5, height=2).n_leaves == 16
    with pytest.raises(ValueError):
        DcParams(0, 2)


def test_w1_equals_lloyd_with_node_seed():
    D = data(200)
    m = dckmeans_train(D, DcParams(3, 1), 42)
    # root and single leaf: the root re-clusters the leaf's k centroids
    leaf = m.nodes[1]
    C, _ = lloyd(D, 3, 10, np.random.default_rng([42, 1, leaf.node_id, 0]))
    np.testing.assert_array_equal(leaf.centroids, C)
    assert sorted(map(tuple, m.centroids)) == sorted(map(tuple, C))


def test_tree_shape_and_partition():
    D = data(1000)
    m = dckmeans_train(D, DcParams(4, 4, height=2), 1)
    leaves = m.leaves()
    assert len(m.nodes) == 1 + 4 + 16 and len(leaves) == 16
    rows = np.concatenate([nd.rows for nd in leaves])
    assert len(rows) == 1000 and len(set(rows.tolist())) == 1000
    assert m.centroids.shape == (4, 2)


def test_root_input_size():
    ds = gen_gaussian_mixture(2000, 25, 5, 0.8, seed=0)
    m = dckmeans_train(ds.data, DcParams(5, 16), 0)
    assert m.node_dataset(m.root, ds.data).shape == (80, 25)


def test_small_leaf_passes_points_up():
    D = data(5)
    m = dckmeans_train(D, DcParams(3, 4), 0, leaf_assignment={0: 1, 1: 1, 2: 2, 3: 3, 4: 4})
    np.testing.assert_array_equal(m.nodes[1].centroids, D.points_of([0, 1]))


def test_delete_leaves_sibling_untouched():
    D = data(100)
    m = dckmeans_train(D, DcParams(2, 2), 3)
    row = int(m.nodes[1].rows[0])
    other = m.nodes[2].centroids.copy()
    m, retrained = dckmeans_delete(m, D, row)
    assert not retrained
    np.testing.assert_array_equal(m.nodes[2].centroids, other)
    assert m.nodes[1].epoch == 1 and m.nodes[2].epoch == 0 and m.root.epoch == 1


def test_delete_last_point_of_leaf():
    D = data(6)
    assign = {0: 1, 1: 2, 2: 2, 3: 2, 4: 2, 5: 2}
    m = dckmeans_train(D, DcParams(2, 2), 0, leaf_assignment=assign)
    m, _ = dckmeans_delete(m, D, 0)
    assert len(m.nodes[1].rows) == 0 and len(m.nodes[1].centroids) == 0
    assert m.node_dataset(m.root, D).shape == (2, 2)


def test_delete_equals_replayed_training():
    rng = np.random.default_rng(5)
    for trial in range(10):
        D = data(int(rng.integers(50, 500)), seed=trial)
        m = dckmeans_train(D, DcParams(3, 4), trial)
        for row in rng.choice(D.live_ids(), 3, replace=False):
            m, _ = dckmeans_delete(m, D, int(row))
        ref = dckmeans_train(D, DcParams(3, 4), m.seed, leaf_assignment=m.leaf_of, epochs=m.epochs())
        for a, b in zip(m.nodes, ref.nodes):
            np.testing.assert_array_equal(a.centroids, b.centroids)


def test_partition_complete_after_deletions():
    D = data(300)
    m = dckmeans_train(D, DcParams(2, 8), 0)
    for row in range(0, 300, 7):
        m, _ = dckmeans_delete(m, D, row)
    rows = np.concatenate([nd.rows for nd in m.leaves()])
    assert sorted(rows.tolist()) == sorted(D.live_ids().tolist())


def test_auto_width_retrains_on_width_change():
    from delkmeans.heuristics import heuristic_width

    n = next(n for n in range(3, 400) if heuristic_width(n) != heuristic_width(n - 1))
    D = data(n)
    m = dckmeans_train(D, DcParams(2, 1, auto_width=True), 0)
    assert m.params.width == heuristic_width(n)
    m, retrained = dckmeans_delete(m, D, 0)
    assert retrained and m.params.width == heuristic_width(n - 1) and m.retrains == 1


def test_delete_errors():
    D = data(20)
    m = dckmeans_train(D, DcParams(2, 2), 0)
    m, _ = dckmeans_delete(m, D, 3)
    with pytest.raises(DataError):
        dckmeans_delete(m, D, 3)


def test_leaf_assignment_must_cover_rows():
    with pytest.raises(DataError):
        dckmeans_train(data(4), DcParams(1, 2), 0, leaf_assignment={0: 1})


def test_model_round_trip():
    D = data(100)
    m = dckmeans_train(D, DcParams(3, 4), 2)
    back = DcModel.from_dict(json.loads(json.dumps(m.to_dict())))
    assert back.to_dict() == m.to_dict()
    a, _ = dckmeans_delete(copy.deepcopy(m), D.copy(), 10)
    b, _ = dckmeans_delete(back, D.copy(), 10)
    np.testing.assert_array_equal(a.centroids, b.centroids)
