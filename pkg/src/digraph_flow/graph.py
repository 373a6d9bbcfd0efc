"""Directed graph data model, batching, permutations and acyclicity."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CyclicGraph, InvalidParam, InvalidPermutation


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.int64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiGraph:
    """Categorical digraph: node classes plus a dense edge-class matrix.

    Node classes are 0-based (``0..X-1``). Edge class 0 is the absent edge;
    ``edge_types[i, j]`` and ``edge_types[j, i]`` are independent.
    Arrays are read-only so instances can be shared freely.
    """

    node_types: np.ndarray
    edge_types: np.ndarray

    def __post_init__(self):
        x = _frozen(self.node_types).reshape(-1)
        e = _frozen(self.edge_types)
        n = x.shape[0]
        if e.size == 0 and n == 0:
            e = _frozen(np.zeros((0, 0), dtype=np.int64))
        if e.shape != (n, n):
            raise InvalidParam(f"edge matrix shape {e.shape} does not match {n} nodes")
        if (x < 0).any() or (e < 0).any():
            raise InvalidParam("class indices must be non-negative")
        object.__setattr__(self, "node_types", x)
        object.__setattr__(self, "edge_types", e)

    @classmethod
    def from_edges(cls, n, edges, node_types=None) -> "DiGraph":
        """Build from ``(i, j)`` or ``(i, j, c)`` tuples; ``c`` defaults to 1."""
        e = np.zeros((n, n), dtype=np.int64)
        for edge in edges:
            i, j = edge[0], edge[1]
            e[i, j] = edge[2] if len(edge) > 2 else 1
        x = np.zeros(n, dtype=np.int64) if node_types is None else node_types
        return cls(x, e)

    @classmethod
    def from_adjacency(cls, adj, node_types=None) -> "DiGraph":
        adj = np.asarray(adj)
        x = np.zeros(adj.shape[0], dtype=np.int64) if node_types is None else node_types
        return cls(x, adj.astype(np.int64))

    @property
    def num_nodes(self) -> int:
        return int(self.node_types.shape[0])

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(self.edge_types))

    def adjacency(self) -> np.ndarray:
        """0/1 arc indicator (any nonzero class counts as an arc)."""
        return (self.edge_types != 0).astype(np.int64)

    def arcs(self) -> list[tuple[int, int, int]]:
        ii, jj = np.nonzero(self.edge_types)
        return [(int(i), int(j), int(self.edge_types[i, j])) for i, j in zip(ii, jj)]

    def __eq__(self, other):
        if not isinstance(other, DiGraph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.node_types, other.node_types)
            and np.array_equal(self.edge_types, other.edge_types)
        )

    def __hash__(self):
        return hash((self.node_types.tobytes(), self.edge_types.tobytes()))

    def __repr__(self):
        return f"DiGraph(n={self.num_nodes}, arcs={self.num_edges})"


def _kahn(adj: np.ndarray) -> list[int]:
    n = adj.shape[0]
    indeg = adj.sum(axis=0).astype(np.int64)
    queue = deque(i for i in range(n) if indeg[i] == 0)
    order = []
    while queue:
        u = queue.popleft()
        order.append(u)
        for v in np.nonzero(adj[u])[0]:
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(int(v))
    return order


def is_acyclic(g: DiGraph) -> bool:
    """True iff no directed cycle exists (self-loops count as cycles)."""
    return len(_kahn(g.adjacency())) == g.num_nodes


def topological_order(g: DiGraph) -> list[int]:
    order = _kahn(g.adjacency())
    if len(order) != g.num_nodes:
        raise CyclicGraph(f"graph with {g.num_nodes} nodes contains a directed cycle")
    return order


def _check_perm(perm, n) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64).reshape(-1)
    if perm.shape[0] != n or not np.array_equal(np.sort(perm), np.arange(n)):
        raise InvalidPermutation(f"not a bijection on {n} nodes: {perm.tolist()}")
    return perm


def permute(g: DiGraph, perm) -> DiGraph:
    """Relabel node ``i`` as ``perm[i]``.

    Composition follows ``permute(g, s[t]) == permute(permute(g, t), s)``.
    """
    perm = _check_perm(perm, g.num_nodes)
    inv = np.argsort(perm)
    return DiGraph(g.node_types[inv], g.edge_types[np.ix_(inv, inv)])


def inverse_permutation(perm) -> np.ndarray:
    return np.argsort(np.asarray(perm, dtype=np.int64))


@dataclass
class GraphBatch:
    """Zero-padded batch of graphs with a boolean node mask."""

    x: np.ndarray  # (B, N)
    e: np.ndarray  # (B, N, N)
    mask: np.ndarray  # (B, N) bool

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]

    @property
    def max_nodes(self) -> int:
        return self.x.shape[1]

    def pair_mask(self, diagonal: bool = False) -> np.ndarray:
        pm = self.mask[:, :, None] & self.mask[:, None, :]
        if not diagonal:
            pm = pm & ~np.eye(self.max_nodes, dtype=bool)[None]
        return pm

    def graphs(self) -> list[DiGraph]:
        out = []
        for b in range(self.batch_size):
            n = int(self.mask[b].sum())
            out.append(DiGraph(self.x[b, :n], self.e[b, :n, :n]))
        return out


def collate(graphs: Sequence[DiGraph]) -> GraphBatch:
    if len(graphs) == 0:
        raise InvalidParam("cannot batch an empty list of graphs")
    n_max = max(g.num_nodes for g in graphs)
    b = len(graphs)
    x = np.zeros((b, n_max), dtype=np.int64)
    e = np.zeros((b, n_max, n_max), dtype=np.int64)
    mask = np.zeros((b, n_max), dtype=bool)
    for k, g in enumerate(graphs):
        n = g.num_nodes
        x[k, :n] = g.node_types
        e[k, :n, :n] = g.edge_types
        mask[k, :n] = True
    return GraphBatch(x, e, mask)


def one_hot(indices: np.ndarray, num_classes: int, dtype=np.float64) -> np.ndarray:
    indices = np.asarray(indices)
    if indices.size and indices.max() >= num_classes:
        raise InvalidParam(f"class index {indices.max()} out of range for {num_classes} classes")
    return np.eye(num_classes, dtype=dtype)[indices]
