"""Weisfeiler-Lehman hashing and exact label-aware digraph isomorphism."""

from __future__ import annotations

import enum
import hashlib
import time
from collections import Counter

import numpy as np

from .graph import DiGraph

DEFAULT_TIMEOUT = 5.0
DEFAULT_WL_ROUNDS = 3


class IsoResult(enum.Enum):
    YES = "yes"
    NO = "no"
    TIMEOUT = "timeout"


def _digest(s: str) -> str:
    return hashlib.blake2b(s.encode(), digest_size=16).hexdigest()


def wl_colors(g: DiGraph, rounds: int = DEFAULT_WL_ROUNDS) -> list[str]:
    """Per-node colors after ``rounds`` of direction-aware refinement.

    Colors are content hashes, so they are comparable across graphs.
    """
    e = g.edge_types
    colors = [_digest(f"x{int(c)}") for c in g.node_types]
    ins = [np.nonzero(e[:, v])[0] for v in range(g.num_nodes)]
    outs = [np.nonzero(e[v, :])[0] for v in range(g.num_nodes)]
    for _ in range(rounds):
        new = []
        for v in range(g.num_nodes):
            in_ms = sorted(f"{colors[u]}:{e[u, v]}" for u in ins[v])
            out_ms = sorted(f"{colors[w]}:{e[v, w]}" for w in outs[v])
            new.append(_digest(colors[v] + "|" + ",".join(in_ms) + "|" + ",".join(out_ms)))
        colors = new
    return colors


def wl_hash(g: DiGraph, rounds: int = DEFAULT_WL_ROUNDS) -> str:
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    hist = sorted(Counter(wl_colors(g, rounds)).items())
    return _digest(f"n{g.num_nodes}|" + ";".join(f"{c}x{k}" for c, k in hist))


class _Timeout(Exception):
    pass


def are_isomorphic(g1: DiGraph, g2: DiGraph, timeout: float = DEFAULT_TIMEOUT) -> IsoResult:
    """Exact isomorphism preserving node classes and edge classes.

    Backtracking over WL color classes; returns ``TIMEOUT`` once the time
    budget (seconds) is exhausted. A budget ``<= 0`` always times out.
    """
    deadline = time.perf_counter() + timeout
    if timeout <= 0:
        return IsoResult.TIMEOUT
    n = g1.num_nodes
    if n != g2.num_nodes or g1.num_edges != g2.num_edges:
        return IsoResult.NO
    if n == 0:
        return IsoResult.YES
    if not np.array_equal(np.sort(g1.node_types), np.sort(g2.node_types)):
        return IsoResult.NO
    if not np.array_equal(np.sort(g1.edge_types, axis=None), np.sort(g2.edge_types, axis=None)):
        return IsoResult.NO

    c1 = wl_colors(g1, rounds=max(DEFAULT_WL_ROUNDS, 1))
    c2 = wl_colors(g2, rounds=max(DEFAULT_WL_ROUNDS, 1))
    if Counter(c1) != Counter(c2):
        return IsoResult.NO

    e1, e2 = g1.edge_types, g2.edge_types
    by_color: dict[str, list[int]] = {}
    for v, c in enumerate(c2):
        by_color.setdefault(c, []).append(v)

    # Visit nodes from small color classes first, then prefer neighbours of
    # already-placed nodes so consistency checks prune early.
    adj1 = (e1 != 0) | (e1.T != 0)
    class_size = Counter(c1)
    order: list[int] = []
    placed = np.zeros(n, dtype=bool)
    while len(order) < n:
        frontier = [u for u in range(n) if not placed[u] and (not order or adj1[u, order].any())]
        if not frontier:
            frontier = [u for u in range(n) if not placed[u]]
        u = min(frontier, key=lambda v: (class_size[c1[v]], -int(adj1[v].sum()), v))
        order.append(u)
        placed[u] = True

    mapping = np.full(n, -1, dtype=np.int64)
    used = np.zeros(n, dtype=bool)
    steps = [0]

    def consistent(u: int, v: int, depth: int) -> bool:
        prev = order[:depth]
        if not prev:
            return e1[u, u] == e2[v, v]
        pv = mapping[prev]
        return (
            e1[u, u] == e2[v, v]
            and np.array_equal(e1[u, prev], e2[v, pv])
            and np.array_equal(e1[prev, u], e2[pv, v])
        )

    def search(depth: int) -> bool:
        steps[0] += 1
        if steps[0] % 256 == 0 and time.perf_counter() > deadline:
            raise _Timeout
        if depth == n:
            return True
        u = order[depth]
        for v in by_color[c1[u]]:
            if used[v] or not consistent(u, v, depth):
                continue
            mapping[u] = v
            used[v] = True
            if search(depth + 1):
                return True
            used[v] = False
            mapping[u] = -1
        return False

    try:
        found = search(0)
    except _Timeout:
        return IsoResult.TIMEOUT
    except RecursionError:
        return IsoResult.TIMEOUT
    return IsoResult.YES if found else IsoResult.NO


def isomorphic(g1: DiGraph, g2: DiGraph, timeout: float = DEFAULT_TIMEOUT) -> bool:
    """Boolean view; a timeout counts as non-isomorphic."""
    return are_isomorphic(g1, g2, timeout) is IsoResult.YES
