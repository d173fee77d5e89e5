"""Graph construction, generation, and normalization.

Graphs are small, undirected, and immutable: node features, integer class
labels, and disjoint train/val/test masks. Edges are stored canonically as
an (m, 2) int array with u < v per row, lexicographically sorted, no
duplicates and no self-loops.

All generators are pure functions of their arguments; anything random takes
an explicit integer seed and draws from a fresh ``numpy.random.default_rng``
in a documented order, so results are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InputError

__all__ = [
    "Graph",
    "NormalizedAdjacency",
    "PartitionSpec",
    "make_graph",
    "path_graph",
    "complete_graph",
    "planted_partition_graph",
    "normalized_adjacency",
    "graph_density",
    "mean_degree",
]


def canonical_edges(edges: np.ndarray, n_nodes: int) -> np.ndarray:
    """Validate and canonicalize an edge array.

    Rows are reordered so u < v, duplicates are removed, and rows are
    sorted lexicographically. Self-loops and out-of-range endpoints raise
    :class:`InputError`.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if edges.min() < 0 or edges.max() >= n_nodes:
        raise InputError(
            f"edge endpoint out of range [0, {n_nodes}): "
            f"min {edges.min()}, max {edges.max()}"
        )
    if np.any(edges[:, 0] == edges[:, 1]):
        bad = int(np.flatnonzero(edges[:, 0] == edges[:, 1])[0])
        raise InputError(f"self-loop at edge row {bad}")
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    canon = np.unique(np.stack([lo, hi], axis=1), axis=0)
    return canon


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Graph:
    """An undirected node-classification graph.

    Invariants (checked at construction): every edge endpoint < n_nodes,
    edges canonical (u < v, unique), feature rows == label length ==
    n_nodes, masks boolean and pairwise disjoint.
    """

    n_nodes: int
    edges: np.ndarray       # (m, 2) int64, canonical
    features: np.ndarray    # (n_nodes, d) float64
    labels: np.ndarray      # (n_nodes,) int64, values in [0, n_classes)
    train_mask: np.ndarray  # (n_nodes,) bool
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InputError("graph must have at least one node")
        if self.features.shape[0] != self.n_nodes:
            raise InputError(
                f"feature rows ({self.features.shape[0]}) != n_nodes ({self.n_nodes})"
            )
        if self.labels.shape != (self.n_nodes,):
            raise InputError(
                f"label length ({self.labels.shape[0]}) != n_nodes ({self.n_nodes})"
            )
        for name in ("train_mask", "val_mask", "test_mask"):
            m = getattr(self, name)
            if m.shape != (self.n_nodes,) or m.dtype != np.bool_:
                raise InputError(f"{name} must be a boolean vector of length n_nodes")
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if overlap.any():
            raise InputError("train/val/test masks overlap")
        canon = canonical_edges(self.edges, self.n_nodes)
        if canon.shape != self.edges.shape or not np.array_equal(canon, self.edges):
            raise InputError("edges are not canonical (u < v, unique, sorted)")
        for name in ("edges", "features", "labels", "train_mask", "val_mask", "test_mask"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n_nodes else 0


def make_graph(
    n_nodes: int,
    edges,
    features=None,
    labels=None,
    train_mask=None,
    val_mask=None,
    test_mask=None,
) -> Graph:
    """Build a :class:`Graph`, canonicalizing edges and filling defaults.

    Defaults: identity features, all-zero labels, all nodes in the train
    split.
    """
    edges = canonical_edges(np.asarray(edges, dtype=np.int64), n_nodes)
    if features is None:
        features = np.eye(n_nodes, dtype=np.float64)
    else:
        features = np.asarray(features, dtype=np.float64)
    if labels is None:
        labels = np.zeros(n_nodes, dtype=np.int64)
    else:
        labels = np.asarray(labels, dtype=np.int64)
    if train_mask is None:
        train_mask = np.ones(n_nodes, dtype=bool)
    if val_mask is None:
        val_mask = np.zeros(n_nodes, dtype=bool)
    if test_mask is None:
        test_mask = np.zeros(n_nodes, dtype=bool)
    return Graph(
        n_nodes=n_nodes,
        edges=edges,
        features=features,
        labels=labels,
        train_mask=np.asarray(train_mask, dtype=bool),
        val_mask=np.asarray(val_mask, dtype=bool),
        test_mask=np.asarray(test_mask, dtype=bool),
    )


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetric degree-normalized adjacency with self-loops, CSR storage.

    Entries follow D^{-1/2} (A + I) D^{-1/2} where D is the degree matrix
    of A + I. Symmetric by construction; all eigenvalues lie in [-1, 1]
    and the largest equals 1 for a connected graph.
    """

    n_nodes: int
    storage: sp.csr_array = field(repr=False)

    def dense(self) -> np.ndarray:
        return self.storage.toarray()

    def __matmul__(self, other: np.ndarray) -> np.ndarray:
        return self.storage @ other


@dataclass(frozen=True)
class PartitionSpec:
    """Label-skew partition parameters: K clients, Dirichlet concentration,
    and the seed that fixes every draw."""

    n_clients: int
    dirichlet_alpha: float
    seed: int

    def __post_init__(self):
        # K = 1 is the degenerate single-client federation and is allowed.
        if self.n_clients < 1:
            raise InputError("partition requires at least 1 client")
        if not self.dirichlet_alpha > 0:
            raise InputError("dirichlet_alpha must be positive")


def normalized_adjacency(g: Graph) -> NormalizedAdjacency:
    """Symmetric self-loop normalization of the graph's adjacency.

    An isolated node gets a diagonal entry of exactly 1 (its only incidence
    is the self-loop).
    """
    n = g.n_nodes
    deg = np.ones(n, dtype=np.float64)  # self-loop contributes 1 everywhere
    if g.n_edges:
        np.add.at(deg, g.edges[:, 0], 1.0)
        np.add.at(deg, g.edges[:, 1], 1.0)
    inv_sqrt = 1.0 / np.sqrt(deg)

    rows = [np.arange(n, dtype=np.int64)]
    cols = [np.arange(n, dtype=np.int64)]
    vals = [inv_sqrt * inv_sqrt]
    if g.n_edges:
        u, v = g.edges[:, 0], g.edges[:, 1]
        w = inv_sqrt[u] * inv_sqrt[v]
        rows += [u, v]
        cols += [v, u]
        vals += [w, w]
    mat = sp.coo_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    return NormalizedAdjacency(n_nodes=n, storage=mat)


def path_graph(n: int) -> Graph:
    """Path on n nodes (0-1-2-...); identity features, zero labels."""
    if n < 1:
        raise InputError("path_graph needs n >= 1")
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    return make_graph(n, edges)


def complete_graph(n: int) -> Graph:
    """Complete graph on n nodes; identity features, zero labels."""
    if n < 1:
        raise InputError("complete_graph needs n >= 1")
    iu = np.triu_indices(n, k=1)
    edges = np.stack(iu, axis=1)
    return make_graph(n, edges)


def planted_partition_graph(
    n_blocks: int,
    block_size: int,
    p_in: float,
    p_out: float,
    n_classes: int,
    feature_dim: int,
    class_sep: float,
    seed: int,
) -> Graph:
    """Stochastic-block-model graph with Gaussian class features.

    Nodes are grouped into ``n_blocks`` consecutive blocks of
    ``block_size``; an edge appears within a block with probability
    ``p_in`` and across blocks with ``p_out``. The class label of a node
    is its block index mod ``n_classes``; features are drawn from
    N(mu_c, I) where mu_c = class_sep * e_{c mod feature_dim}. Splits are
    60/20/20 per class, assigned round-robin over each class's nodes in
    index order.

    RNG stream order (one ``default_rng(seed)``): first a single (n, n)
    uniform draw for the edge coin flips (strict upper triangle used),
    then an (n, feature_dim) standard-normal draw for feature noise.
    """
    if n_blocks < 1 or block_size < 1:
        raise InputError("planted_partition_graph needs non-empty blocks")
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise InputError("need 0 <= p_out <= p_in <= 1")
    if n_classes < 1 or feature_dim < 1:
        raise InputError("n_classes and feature_dim must be positive")

    n = n_blocks * block_size
    block = np.repeat(np.arange(n_blocks), block_size)
    labels = (block % n_classes).astype(np.int64)

    rng = np.random.default_rng(seed)
    prob = np.where(block[:, None] == block[None, :], p_in, p_out)
    coins = rng.random((n, n))
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    adj = upper & (coins < prob)
    edges = np.stack(np.nonzero(adj), axis=1)

    means = np.zeros((n_classes, feature_dim))
    means[np.arange(n_classes), np.arange(n_classes) % feature_dim] = class_sep
    features = means[labels] + rng.standard_normal((n, feature_dim))

    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        slot = np.arange(idx.size) % 5  # 0,1,2 train / 3 val / 4 test
        train[idx[slot <= 2]] = True
        val[idx[slot == 3]] = True
        test[idx[slot == 4]] = True

    return make_graph(
        n, edges, features=features, labels=labels,
        train_mask=train, val_mask=val, test_mask=test,
    )


def graph_density(g: Graph) -> float:
    """2|E| / (|V| (|V|-1)); undefined for graphs with fewer than 2 nodes."""
    if g.n_nodes < 2:
        raise InputError("density is undefined for graphs with < 2 nodes")
    return 2.0 * g.n_edges / (g.n_nodes * (g.n_nodes - 1))


def mean_degree(g: Graph) -> float:
    """2|E| / |V|."""
    return 2.0 * g.n_edges / g.n_nodes
