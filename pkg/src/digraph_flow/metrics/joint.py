"""Joint node/edge label metrics for attributed digraphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..errors import EmptySet, UnlabeledData
from ..graph import DiGraph
from .mmd import mmd, mmd_from_kernels

EMBED_DIM = 64
EMBED_ROUNDS = 3
FID_LOADING = 1e-6


def label_histogram(g: DiGraph, num_node_classes: int) -> np.ndarray:
    return np.bincount(g.node_types, minlength=num_node_classes).astype(np.float64)


def triplets(g: DiGraph) -> set:
    """(source class, edge class, target class) for every arc."""
    x = g.node_types
    return {(int(x[i]), int(k), int(x[j])) for i, j, k in g.arcs()}


def triplet_precision_recall(gen, test) -> tuple[float, float]:
    made = set().union(*(triplets(g) for g in gen)) if gen else set()
    truth = set().union(*(triplets(g) for g in test)) if test else set()
    hit = len(made & truth)
    precision = hit / len(made) if made else 0.0
    recall = hit / len(truth) if truth else 0.0
    return precision, recall


def _orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    size = max(rows, cols)
    q, _ = np.linalg.qr(rng.standard_normal((size, size)))
    return q[:rows, :cols]


class RandomGNN:
    """Untrained typed message-passing network with fixed seeded orthogonal weights.

    Weights are drawn in this order: input map, then per round a self map
    followed by forward and backward maps for each edge class ``1..E-1``.
    """

    def __init__(self, num_node_classes: int, num_edge_classes: int, dim: int = EMBED_DIM,
                 rounds: int = EMBED_ROUNDS, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.X, self.E = num_node_classes, num_edge_classes
        self.w_in = _orthogonal(rng, num_node_classes, dim)
        self.layers = []
        for _ in range(rounds):
            w_self = _orthogonal(rng, dim, dim)
            w_edge = [(_orthogonal(rng, dim, dim), _orthogonal(rng, dim, dim)) for _ in range(1, num_edge_classes)]
            self.layers.append((w_self, w_edge))

    def embed(self, g: DiGraph) -> np.ndarray:
        h = np.eye(self.X)[g.node_types] @ self.w_in
        adj = [(g.edge_types == k).astype(np.float64) for k in range(1, self.E)]
        for w_self, w_edge in self.layers:
            z = h @ w_self
            for a, (w_fwd, w_bwd) in zip(adj, w_edge):
                z = z + a @ h @ w_fwd + a.T @ h @ w_bwd
            h = np.tanh(z)
        return h.sum(axis=0)


def fid(a: np.ndarray, b: np.ndarray) -> float:
    d = a.shape[1]
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = (np.cov(a, rowvar=False) if len(a) > 1 else np.zeros((d, d))) + FID_LOADING * np.eye(d)
    cov_b = (np.cov(b, rowvar=False) if len(b) > 1 else np.zeros((d, d))) + FID_LOADING * np.eye(d)
    root = linalg.sqrtm(cov_a @ cov_b)
    root = np.real(root)
    val = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a + cov_b - 2.0 * root))
    return max(val, 0.0)


def rbf_mmd(a: np.ndarray, b: np.ndarray) -> float:
    """MMD^2 with an RBF kernel whose width is the median pooled pairwise distance."""
    pooled = np.concatenate([a, b])
    dist = np.sqrt(((pooled[:, None, :] - pooled[None, :, :]) ** 2).sum(axis=-1))
    off = dist[np.triu_indices(len(pooled), k=1)]
    pos = off[off > 0]
    sigma = float(np.median(pos)) if pos.size else 1.0

    def k(x, y):
        d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)
        return np.exp(-d2 / (2.0 * sigma ** 2))

    return mmd_from_kernels(k(a, a), k(b, b), k(a, b))


@dataclass
class JointMetrics:
    node_type_mmd: float
    precision: float
    recall: float
    fid: float
    rbf_mmd: float


def joint_metrics(gen, test, num_node_classes: int, num_edge_classes: int, seed: int = 0) -> JointMetrics:
    if num_node_classes <= 1 and num_edge_classes <= 2:
        raise UnlabeledData("joint metrics need node labels or several edge classes")
    if not gen or not test:
        raise EmptySet("joint metrics need two non-empty sets")
    node_mmd = mmd([label_histogram(g, num_node_classes) for g in gen],
                   [label_histogram(g, num_node_classes) for g in test])
    precision, recall = triplet_precision_recall(gen, test)
    net = RandomGNN(num_node_classes, num_edge_classes, seed=seed)
    ea = np.stack([net.embed(g) for g in gen])
    eb = np.stack([net.embed(g) for g in test])
    return JointMetrics(node_mmd, precision, recall, fid(ea, eb), rbf_mmd(ea, eb))
