"""Per-graph structural descriptors compared by MMD."""

from __future__ import annotations

import networkx as nx
import numpy as np

from ..graph import DiGraph
from ..posenc import Walk, directed_laplacian

KINDS = ("out_degree", "in_degree", "clustering", "spectre", "wavelet")
SPECTRE_BINS = 64
CLUSTERING_BINS = 100
WAVELET_SCALES = (0.5, 1.0, 2.0, 5.0, 10.0)
WAVELET_BINS = 20
TELEPORT = 0.05


def out_degree_hist(g: DiGraph) -> np.ndarray:
    return np.bincount(g.adjacency().sum(axis=1), minlength=1).astype(np.float64)


def in_degree_hist(g: DiGraph) -> np.ndarray:
    return np.bincount(g.adjacency().sum(axis=0), minlength=1).astype(np.float64)


def to_networkx(g: DiGraph) -> nx.DiGraph:
    h = nx.DiGraph()
    h.add_nodes_from(range(g.num_nodes))
    h.add_edges_from((i, j) for i, j, _ in g.arcs())
    return h


def clustering_hist(g: DiGraph, bins: int = CLUSTERING_BINS) -> np.ndarray:
    """Histogram of directed local clustering coefficients (all triangle types)."""
    coeffs = list(nx.clustering(to_networkx(g)).values())
    hist, _ = np.histogram(coeffs, bins=bins, range=(0.0, 1.0))
    return hist.astype(np.float64)


def _laplacian_eigh(g: DiGraph):
    lap = directed_laplacian(g, Walk.PAGERANK, TELEPORT)
    return np.linalg.eigh(lap)


def spectre_hist(g: DiGraph, bins: int = SPECTRE_BINS) -> np.ndarray:
    vals = np.clip(np.linalg.eigvalsh(directed_laplacian(g, Walk.PAGERANK, TELEPORT)), 0.0, 2.0)
    hist, _ = np.histogram(vals, bins=bins, range=(0.0, 2.0))
    return hist.astype(np.float64)


def heat_kernel_signature(g: DiGraph, scales=WAVELET_SCALES) -> np.ndarray:
    """(N, S) matrix of ``sum_i exp(-s lambda_i) phi_i(v)^2``; entries lie in [0, 1]."""
    vals, vecs = _laplacian_eigh(g)
    return (vecs ** 2) @ np.exp(-np.outer(np.clip(vals, 0.0, None), scales))


def wavelet_vector(g: DiGraph, scales=WAVELET_SCALES, bins: int = WAVELET_BINS) -> np.ndarray:
    """Per-scale histograms of node heat-kernel signatures, concatenated."""
    hks = heat_kernel_signature(g, scales)
    parts = [np.histogram(hks[:, k], bins=bins, range=(0.0, 1.0))[0] for k in range(len(scales))]
    return np.concatenate(parts).astype(np.float64)


_FUNCS = {
    "out_degree": out_degree_hist,
    "in_degree": in_degree_hist,
    "clustering": clustering_hist,
    "spectre": spectre_hist,
    "wavelet": wavelet_vector,
}


def descriptor(g: DiGraph, kind: str) -> np.ndarray:
    try:
        fn = _FUNCS[kind]
    except KeyError:
        raise ValueError(f"unknown descriptor {kind!r}; expected one of {KINDS}") from None
    return fn(g)


def describe(graphs, kind: str) -> list[np.ndarray]:
    return [descriptor(g, kind) for g in graphs]
