"""Divide-and-conquer k-means on a w-ary tree, with leaf-to-root deletion.

Rows are scattered uniformly over the leaves. Every node solves its own
k-means problem (k-means++ then Lloyd): leaves on their rows, internal nodes
on the concatenated centroids of their children. Deleting a row therefore
only re-solves the nodes on one leaf-to-root path.

Each node draws randomness from ``default_rng([seed, 1, node_id, epoch])``
and bumps ``epoch`` whenever it is re-solved, so any model state can be
rebuilt from its leaf assignment and epochs alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import lloyd
from .dataset import DataError, DataMatrix
from .heuristics import heuristic_width, nearest_power_of_two


@dataclass
class DcParams:
    """Tree shape and per-node solver settings.

    ``width`` is rounded to the nearest power of two so the leaf count
    ``width**height`` is one too. With ``auto_width`` the width follows
    :func:`heuristic_width` of the live row count, and a deletion that
    changes it forces a full retrain.
    """

    k: int
    width: int
    height: int = 1
    T: int = 10
    auto_width: bool = False

    def __post_init__(self):
        if self.k < 1 or self.T < 1 or self.width < 1 or self.height < 1:
            raise ValueError("k, T, width and height must be >= 1")
        self.width = nearest_power_of_two(self.width)

    @property
    def n_leaves(self) -> int:
        return self.width**self.height


@dataclass
class DcNode:
    node_id: int
    level: int
    parent: int | None
    children: list[int] = field(default_factory=list)
    rows: np.ndarray | None = None  # leaves only: row ids, ascending
    centroids: np.ndarray | None = None
    epoch: int = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class DcModel:
    params: DcParams
    nodes: list[DcNode]
    leaf_of: dict[int, int]
    seed: int
    retrains: int = 0

    @property
    def root(self) -> DcNode:
        return self.nodes[0]

    @property
    def centroids(self) -> np.ndarray:
        return self.root.centroids

    def leaves(self) -> list[DcNode]:
        return [nd for nd in self.nodes if nd.is_leaf]

    def epochs(self) -> list[int]:
        return [nd.epoch for nd in self.nodes]

    def node_dataset(self, node: DcNode, D: DataMatrix) -> np.ndarray:
        """Points a node clusters: its rows, or its children's centroids."""
        if node.is_leaf:
            return D.points_of(node.rows) if len(node.rows) else np.empty((0, D.d))
        return np.concatenate([self.nodes[c].centroids for c in node.children], axis=0)

    def to_dict(self) -> dict:
        return {
            "params": {
                "k": self.params.k,
                "width": self.params.width,
                "height": self.params.height,
                "T": self.params.T,
                "auto_width": self.params.auto_width,
            },
            "seed": self.seed,
            "retrains": self.retrains,
            "nodes": [
                {
                    "node_id": nd.node_id,
                    "level": nd.level,
                    "parent": nd.parent,
                    "children": nd.children,
                    "rows": None if nd.rows is None else [int(r) for r in nd.rows],
                    "centroids": nd.centroids.tolist(),
                    "d": nd.centroids.shape[1],
                    "epoch": nd.epoch,
                }
                for nd in self.nodes
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> DcModel:
        nodes = []
        for r in d["nodes"]:
            c = np.array(r["centroids"], dtype=np.float64).reshape(-1, r["d"])
            rows = None if r["rows"] is None else np.array(r["rows"], dtype=np.int64)
            nodes.append(DcNode(r["node_id"], r["level"], r["parent"], list(r["children"]), rows, c, r["epoch"]))
        leaf_of = {int(row): nd.node_id for nd in nodes if nd.rows is not None for row in nd.rows}
        return cls(DcParams(**d["params"]), nodes, leaf_of, int(d["seed"]), int(d["retrains"]))


def _build_tree(p: DcParams) -> list[DcNode]:
    nodes = [DcNode(0, 0, None)]
    frontier = [0]
    for level in range(1, p.height + 1):
        nxt = []
        for parent in frontier:
            for _ in range(p.width):
                nd = DcNode(len(nodes), level, parent)
                nodes[parent].children.append(nd.node_id)
                nodes.append(nd)
                nxt.append(nd.node_id)
        frontier = nxt
    return nodes


def _solve(model: DcModel, node: DcNode, D: DataMatrix) -> None:
    X = model.node_dataset(node, D)
    k = model.params.k
    if len(X) < k:
        # too few points for k clusters: pass them up unchanged
        node.centroids = X.copy()
        return
    rng = np.random.default_rng([model.seed, 1, node.node_id, node.epoch])
    node.centroids, _ = lloyd(X, k, model.params.T, rng)


def _solve_all(model: DcModel, D: DataMatrix) -> None:
    for level in range(model.params.height, -1, -1):
        for nd in model.nodes:
            if nd.level == level:
                _solve(model, nd, D)


def _as_seed(rng) -> int:
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return int(gen.integers(2**63))


def dckmeans_train(
    D: DataMatrix,
    params: DcParams,
    rng=None,
    *,
    leaf_assignment: dict[int, int] | None = None,
    epochs: list[int] | None = None,
) -> DcModel:
    """Train divide-and-conquer k-means on the live rows of ``D``.

    ``rng`` is an integer seed, a Generator (one seed is drawn from it) or
    None. ``leaf_assignment`` (row id -> leaf node id) and ``epochs`` (one
    per node) replace the random scatter and the initial epochs; together
    with the same seed they reproduce a model bit for bit.
    """
    if D.live_count < params.k:
        raise ValueError(f"k={params.k} exceeds the number of live rows ({D.live_count})")
    if params.auto_width:
        params = DcParams(params.k, heuristic_width(D.live_count), params.height, params.T, True)
    seed = _as_seed(rng)
    nodes = _build_tree(params)
    leaves = [nd for nd in nodes if nd.is_leaf]
    ids = D.live_ids()
    if leaf_assignment is None:
        scatter = np.random.default_rng([seed, 0]).integers(len(leaves), size=len(ids))
        leaf_ids = np.array([nd.node_id for nd in leaves])[scatter]
    else:
        try:
            leaf_ids = np.array([leaf_assignment[int(r)] for r in ids], dtype=np.int64)
        except KeyError as e:
            raise DataError(f"leaf assignment misses row {e.args[0]}") from None
    for nd in leaves:
        nd.rows = ids[leaf_ids == nd.node_id]
    if epochs is not None:
        if len(epochs) != len(nodes):
            raise ValueError(f"expected {len(nodes)} epochs, got {len(epochs)}")
        for nd, e in zip(nodes, epochs):
            nd.epoch = int(e)
    model = DcModel(params, nodes, dict(zip(ids.tolist(), leaf_ids.tolist())), seed)
    _solve_all(model, D)
    return model


def dckmeans_delete(model: DcModel, D: DataMatrix, row_id: int) -> tuple[DcModel, bool]:
    """Remove ``row_id`` and re-solve the nodes on its leaf-to-root path.

    Returns ``(model, retrained)``; ``retrained`` is True only when an
    auto-sized tree changes width and is rebuilt from scratch.
    """
    row_id = int(row_id)
    if not D.is_live(row_id) or row_id not in model.leaf_of:
        raise DataError(f"row_id {row_id} is not live in this model")
    D.delete_row(row_id)
    p = model.params
    if p.auto_width and heuristic_width(D.live_count) != p.width:
        seed = int(np.random.default_rng([model.seed, 2, model.retrains + 1]).integers(2**63))
        fresh = dckmeans_train(D, p, seed)
        fresh.retrains = model.retrains + 1
        return fresh, True
    leaf = model.nodes[model.leaf_of.pop(row_id)]
    leaf.rows = leaf.rows[leaf.rows != row_id]
    node = leaf
    while True:
        node.epoch += 1
        _solve(model, node, D)
        if node.parent is None:
            break
        node = model.nodes[node.parent]
    return model, False
