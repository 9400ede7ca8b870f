"""Time-varying undirected communication graphs and their mixing matrices.

Nodes are indexed ``0..m-1``. Edges are stored as sorted pairs ``(i, j)`` with
``i < j``; a node's own index is implicitly part of its neighbourhood and is
never stored as a self-loop.

Random topologies are produced in blocks of epochs so that a long run can pull
one mixing matrix per iteration without paying generator set-up costs every
step. The result for a given ``(kind, m, epoch, seed, edge_prob)`` does not
depend on how it was requested.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidArgument, PreconditionViolation

KINDS = ("complete", "ring", "random_connected")

# tag mixed into seed sequences so graph draws never share a stream with noise draws
GRAPH_STREAM = 0
BLOCK = 512
SUM_TOL = 1e-12


@dataclass(frozen=True)
class Topology:
    m: int
    edges: frozenset
    epoch: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise InvalidArgument(f"topology needs at least one node, got m={self.m}")
        for i, j in self.edges:
            if not (0 <= i < j < self.m):
                raise InvalidArgument(f"edge {(i, j)} is not a sorted pair of distinct nodes")

    @classmethod
    def from_edges(cls, m: int, edges: Iterable, epoch: int = 0) -> "Topology":
        pairs = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidArgument(f"self-loop on node {i}")
            pairs.add((min(i, j), max(i, j)))
        return cls(m, frozenset(pairs), epoch)

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, epoch: int = 0) -> "Topology":
        ii, jj = np.nonzero(np.triu(adj, k=1))
        return cls(adj.shape[0], frozenset(zip(ii.tolist(), jj.tolist())), epoch)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.m, self.m), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj

    def neighbors(self, i: int) -> list[int]:
        """Sorted neighbours of ``i``, excluding ``i`` itself."""
        out = [b if a == i else a for a, b in self.edges if i in (a, b)]
        return sorted(out)

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    entries: np.ndarray
    eta: float

    @property
    def m(self) -> int:
        return self.entries.shape[0]


def _metropolis(adj: np.ndarray) -> np.ndarray:
    """Metropolis-Hastings weights for one adjacency matrix or a stack of them."""
    deg = adj.sum(axis=-1)
    denom = 1.0 + np.maximum(deg[..., :, None], deg[..., None, :])
    w = np.where(adj, 1.0 / denom, 0.0)
    m = adj.shape[-1]
    idx = np.arange(m)
    w[..., idx, idx] = 1.0 - w.sum(axis=-1)
    return w


def _fixed_adjacency(kind: str, m: int) -> np.ndarray:
    if kind == "complete":
        return ~np.eye(m, dtype=bool)
    adj = np.zeros((m, m), dtype=bool)
    if m == 2:
        adj[0, 1] = adj[1, 0] = True
    elif m > 2:
        idx = np.arange(m)
        adj[idx, (idx + 1) % m] = True
        adj[(idx + 1) % m, idx] = True
    return adj


def _random_adjacency_block(m: int, seed: int, block: int, edge_prob: float,
                            size: int = BLOCK) -> np.ndarray:
    """Adjacency matrices for epochs ``block*size .. block*size+size-1``.

    Each graph is a random recursive spanning tree over a random node order,
    plus every remaining pair added independently with ``edge_prob``.
    """
    rng = np.random.default_rng([GRAPH_STREAM, seed, block])
    adj = np.zeros((size, m, m), dtype=bool)
    if m == 1:
        return adj
    order = np.argsort(rng.random((size, m)), axis=1)
    attach = rng.random((size, m))
    rows = np.arange(size)
    for t in range(1, m):
        child = order[:, t]
        parent = order[rows, np.floor(attach[:, t] * t).astype(int)]
        adj[rows, child, parent] = True
        adj[rows, parent, child] = True
    extra = np.triu(rng.random((size, m, m)) < edge_prob, k=1)
    adj |= extra | extra.transpose(0, 2, 1)
    return adj


def _check_kind(kind: str, m: int) -> None:
    if kind not in KINDS:
        raise InvalidArgument(f"unknown topology kind {kind!r}; expected one of {KINDS}")
    if m < 1:
        raise InvalidArgument(f"topology needs at least one node, got m={m}")


def generate_topology(kind: str, m: int, epoch: int = 0, seed: int = 0,
                      edge_prob: float = 0.3) -> Topology:
    """Topology serving iteration ``epoch``.

    ``complete`` and ``ring`` ignore ``epoch`` and ``seed``. For
    ``random_connected`` the graph is connected by construction.
    """
    _check_kind(kind, m)
    if kind != "random_connected":
        return Topology.from_adjacency(_fixed_adjacency(kind, m), epoch)
    block, offset = divmod(epoch, BLOCK)
    adj = _random_adjacency_block(m, seed, block, edge_prob)[offset]
    return Topology.from_adjacency(adj, epoch)


def is_connected(g: Topology) -> bool:
    if g.m <= 1:
        return True
    return len(_bfs_tree(g)) == g.m - 1


def _bfs_tree(g: Topology) -> list[tuple[int, int]]:
    adj = g.adjacency()
    seen = np.zeros(g.m, dtype=bool)
    seen[0] = True
    queue = deque([0])
    tree = []
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                tree.append((min(u, int(v)), max(u, int(v))))
                queue.append(int(v))
    return tree


def spanning_tree(g: Topology) -> list[tuple[int, int]]:
    """BFS tree from node 0, visiting neighbours in ascending order."""
    tree = _bfs_tree(g)
    if len(tree) != g.m - 1:
        raise PreconditionViolation("spanning_tree requires a connected graph")
    return tree


def metropolis_weights(g: Topology) -> WeightMatrix:
    if not is_connected(g):
        raise PreconditionViolation("metropolis_weights requires a connected graph")
    w = _metropolis(g.adjacency())
    return WeightMatrix(w, float(w[w > 0].min()))


def validate_weights(w: WeightMatrix, g: Topology) -> list[str]:
    """Human-readable list of violated mixing-matrix invariants; empty when valid."""
    a = np.asarray(w.entries, dtype=float)
    if a.shape != (g.m, g.m):
        raise InvalidArgument(f"weight matrix shape {a.shape} does not match m={g.m}")
    report = []
    if not w.eta > 0:
        report.append(f"eta: floor must be positive, got {w.eta}")
    if (a < 0).any():
        report.append("nonnegative: matrix has negative entries")
    rows = np.abs(a.sum(axis=1) - 1.0)
    if rows.max() > SUM_TOL:
        report.append(f"row-sum: row {int(rows.argmax())} deviates from 1 by {rows.max():.3e}")
    cols = np.abs(a.sum(axis=0) - 1.0)
    if cols.max() > SUM_TOL:
        report.append(f"column-sum: column {int(cols.argmax())} deviates from 1 by {cols.max():.3e}")
    diag = np.diag(a)
    if (diag <= 0).any() or (diag < w.eta).any():
        report.append(f"diagonal: smallest diagonal entry {diag.min():.3e} is below eta={w.eta:.3e}")
    pos = a[a > 0]
    if pos.size and pos.min() < w.eta:
        report.append(f"eta: positive entry {pos.min():.3e} below floor {w.eta:.3e}")
    pattern = g.adjacency() | np.eye(g.m, dtype=bool)
    if ((a > 0) != pattern).any():
        report.append("sparsity: positive entries do not match the neighbour sets")
    return report


class TopologySequence:
    """Per-iteration mixing matrices for one run.

    With ``static=True`` the epoch-0 graph is reused for every iteration.
    """

    def __init__(self, kind: str, m: int, seed: int = 0, edge_prob: float = 0.3,
                 static: bool = False):
        _check_kind(kind, m)
        if not 0.0 <= edge_prob <= 1.0:
            raise InvalidArgument(f"edge_prob must lie in [0, 1], got {edge_prob}")
        self.kind = kind
        self.m = m
        self.seed = seed
        self.edge_prob = edge_prob
        self.static = static or kind != "random_connected"
        self._block_id = None
        self._adj = None
        self._weights = None
        if self.static:
            if kind == "random_connected":
                adj = _random_adjacency_block(m, seed, 0, edge_prob)[0]
            else:
                adj = _fixed_adjacency(kind, m)
            self._adj = adj[None]
            self._weights = _metropolis(adj)[None]

    def _slot(self, epoch: int) -> int:
        if self.static:
            return 0
        block, offset = divmod(epoch, BLOCK)
        if block != self._block_id:
            self._adj = _random_adjacency_block(self.m, self.seed, block, self.edge_prob)
            self._weights = _metropolis(self._adj)
            self._block_id = block
        return offset

    def weights(self, epoch: int) -> np.ndarray:
        slot = self._slot(epoch)
        return self._weights[slot]

    def topology(self, epoch: int) -> Topology:
        slot = self._slot(epoch)
        return Topology.from_adjacency(self._adj[slot], epoch)

    def weight_matrix(self, epoch: int) -> WeightMatrix:
        w = self.weights(epoch)
        return WeightMatrix(w, float(w[w > 0].min()))
