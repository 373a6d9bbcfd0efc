"""Direction-aware positional encodings for digraphs.

All encodings are pure functions of the arc structure (any nonzero edge
class counts as an arc). Feature widths depend only on the configuration,
never on the graph size, so graphs of different sizes can be batched.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import EigenFailure, InvalidParam, NonConvergent, SingularMatrix
from .graph import DiGraph

Q5 = (0.0, 0.1, 0.2, 0.3, 0.4)
Q10 = tuple(round(0.01 * k, 2) for k in range(1, 11))


class PEKind(str, enum.Enum):
    NONE = "none"
    LAP = "lap"
    DIRLAP = "dirlap"
    MAGLAP = "maglap"
    MULTI_MAGLAP = "multi_maglap"
    RRWP = "rrwp"


class Walk(str, enum.Enum):
    PLAIN = "plain"
    LAZY = "lazy"
    PAGERANK = "pagerank"


@dataclass
class PEConfig:
    kind: PEKind = PEKind.RRWP
    q_list: tuple = (0.1,)
    k_eigen: int = 10
    K_walk: int = 20
    use_ppr: bool = False
    p_restart: float = 0.15
    normalized: bool = False
    teleport: float = 0.05

    def __post_init__(self):
        self.kind = PEKind(self.kind)
        self.q_list = tuple(float(q) for q in self.q_list)
        if self.kind in (PEKind.MAGLAP, PEKind.MULTI_MAGLAP) and not self.q_list:
            raise InvalidParam("q_list must be nonempty for magnetic Laplacian encodings")
        if self.k_eigen < 1 or self.K_walk < 1:
            raise InvalidParam("k_eigen and K_walk must be >= 1")
        if not 0.0 < self.p_restart <= 1.0:
            raise InvalidParam("p_restart must lie in (0, 1]")

    @property
    def potentials(self) -> tuple:
        return self.q_list[:1] if self.kind is PEKind.MAGLAP else self.q_list

    def dims(self) -> tuple[int, int, int]:
        """(node, edge, graph) feature widths."""
        k = self.k_eigen
        if self.kind is PEKind.NONE:
            return 0, 0, 0
        if self.kind in (PEKind.LAP, PEKind.DIRLAP):
            return k, 0, k
        if self.kind in (PEKind.MAGLAP, PEKind.MULTI_MAGLAP):
            nq = len(self.potentials)
            return 2 * k * nq, 0, k * nq
        width = 2 * self.K_walk + (1 if self.use_ppr else 0)
        return width, width, 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "q_list": list(self.q_list),
            "k_eigen": self.k_eigen,
            "K_walk": self.K_walk,
            "use_ppr": self.use_ppr,
            "p_restart": self.p_restart,
            "normalized": self.normalized,
            "teleport": self.teleport,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PEConfig":
        return cls(**d)


@dataclass
class PEFeatures:
    node: np.ndarray  # (N, d_node)
    edge: np.ndarray  # (N, N, d_edge)
    graph: np.ndarray  # (d_graph,)

    @classmethod
    def empty(cls, n: int) -> "PEFeatures":
        return cls(np.zeros((n, 0)), np.zeros((n, n, 0)), np.zeros(0))


def _inv_sqrt(deg: np.ndarray) -> np.ndarray:
    out = np.zeros_like(deg, dtype=np.float64)
    nz = deg > 0
    out[nz] = 1.0 / np.sqrt(deg[nz])
    return out


def _sym_adjacency(g: DiGraph) -> np.ndarray:
    a = g.adjacency()
    return ((a + a.T) > 0).astype(np.float64)


def sym_laplacian(g: DiGraph, normalized: bool = False) -> np.ndarray:
    a_s = _sym_adjacency(g)
    deg = a_s.sum(axis=1)
    if not normalized:
        return np.diag(deg) - a_s
    d = _inv_sqrt(deg)
    return np.eye(g.num_nodes) - d[:, None] * a_s * d[None, :]


def magnetic_laplacian(g: DiGraph, q: float, normalized: bool = False) -> np.ndarray:
    """Hermitian Laplacian with phase ``2 pi q (A_uv - A_vu)`` on each arc."""
    a = g.adjacency().astype(np.float64)
    a_s = ((a + a.T) > 0).astype(np.float64)
    deg = a_s.sum(axis=1)
    phase = np.exp(1j * 2.0 * np.pi * q * (a - a.T))
    if normalized:
        d = _inv_sqrt(deg)
        return np.eye(g.num_nodes) - (d[:, None] * a_s * d[None, :]) * phase
    return np.diag(deg).astype(np.complex128) - a_s * phase


def fix_gauge(vecs: np.ndarray) -> np.ndarray:
    """Rotate each column so its first largest-modulus entry is real and >= 0."""
    vecs = np.array(vecs, copy=True)
    for k in range(vecs.shape[1]):
        mod = np.abs(vecs[:, k])
        if mod.size == 0 or mod.max() == 0:
            continue
        idx = int(np.argmax(mod >= mod.max() - 1e-10))
        phase = vecs[idx, k] / mod[idx]
        vecs[:, k] = vecs[:, k] * np.conj(phase)
        if np.iscomplexobj(vecs):
            vecs[idx, k] = abs(vecs[idx, k])
    return vecs


def _eigh(mat: np.ndarray):
    try:
        vals, vecs = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(vecs))):
        raise EigenFailure("eigensolver returned non-finite values")
    return vals, fix_gauge(vecs)


def _pad_cols(a: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((a.shape[0], k), dtype=a.dtype)
    m = min(k, a.shape[1])
    out[:, :m] = a[:, :m]
    return out


def _pad_vec(a: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(k, dtype=np.float64)
    m = min(k, a.shape[0])
    out[:m] = a[:m]
    return out


def spectral_features(mat: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """First ``k`` eigenpairs (ascending), zero-padded: (vectors N x k, values k)."""
    vals, vecs = _eigh(mat)
    return _pad_cols(vecs, k), _pad_vec(vals.real, k)


def lap_features(g: DiGraph, k_eigen: int = 10, normalized: bool = False) -> PEFeatures:
    vecs, vals = spectral_features(sym_laplacian(g, normalized), k_eigen)
    n = g.num_nodes
    return PEFeatures(vecs.real.astype(np.float64), np.zeros((n, n, 0)), vals)


def maglap_features(g: DiGraph, q_list, k_eigen: int = 10, normalized: bool = False) -> PEFeatures:
    """Concatenated [Re | Im] eigenvectors per potential; eigenvalues as graph features."""
    n = g.num_nodes
    node_parts, graph_parts = [], []
    for q in q_list:
        if q == 0:
            # Real symmetric case: same code path as the plain Laplacian.
            vecs, vals = spectral_features(sym_laplacian(g, normalized), k_eigen)
            re, im = vecs.real, np.zeros_like(vecs.real)
        else:
            vecs, vals = spectral_features(magnetic_laplacian(g, q, normalized), k_eigen)
            re, im = vecs.real, vecs.imag
        node_parts += [re, im]
        graph_parts.append(vals)
    return PEFeatures(
        np.concatenate(node_parts, axis=1), np.zeros((n, n, 0)), np.concatenate(graph_parts)
    )


def _stochastic(a: np.ndarray) -> np.ndarray:
    """Add self-loops to rows without arcs, then row-normalise."""
    a = a.astype(np.float64).copy()
    dead = a.sum(axis=1) == 0
    a[dead, dead] = 1.0
    return a / a.sum(axis=1, keepdims=True)


def transition_matrices(g: DiGraph) -> tuple[np.ndarray, np.ndarray]:
    """Forward (out-arcs) and reverse (in-arcs) row-stochastic walk operators."""
    a = g.adjacency()
    return _stochastic(a), _stochastic(a.T)


def ppr_matrix(trans: np.ndarray, p_restart: float) -> np.ndarray:
    n = trans.shape[0]
    if p_restart == 1.0:
        return np.eye(n)
    try:
        inv = np.linalg.solve(np.eye(n) - (1.0 - p_restart) * trans, np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc
    return p_restart * inv


def rrwp_features(g: DiGraph, K_walk: int = 20, use_ppr: bool = False, p_restart: float = 0.15) -> PEFeatures:
    """Stacked powers ``[I, T, .., T^(K-1), I, R, .., R^(K-1)]`` (+ PPR)."""
    if K_walk < 1:
        raise InvalidParam("K_walk must be >= 1")
    t_mat, r_mat = transition_matrices(g)
    n = g.num_nodes
    slices = []
    for base in (t_mat, r_mat):
        cur = np.eye(n)
        for _ in range(K_walk):
            slices.append(cur)
            cur = cur @ base
    if use_ppr:
        slices.append(ppr_matrix(t_mat, p_restart))
    edge = np.stack(slices, axis=-1) if n else np.zeros((0, 0, len(slices)))
    node = np.stack([np.diag(s) for s in slices], axis=-1) if n else np.zeros((0, len(slices)))
    return PEFeatures(node, edge, np.zeros(0))


def walk_operator(g: DiGraph, walk: Walk = Walk.PAGERANK, teleport: float = 0.05) -> np.ndarray:
    walk = Walk(walk)
    n = g.num_nodes
    a = g.adjacency().astype(np.float64)
    out = a.sum(axis=1)
    p = np.where(out[:, None] > 0, a / np.maximum(out, 1)[:, None], 1.0 / n)
    if walk is Walk.LAZY:
        p = 0.5 * (np.eye(n) + p)
    elif walk is Walk.PAGERANK:
        if not 0.0 < teleport < 1.0:
            raise InvalidParam("teleport must lie in (0, 1)")
        p = (1.0 - teleport) * p + teleport / n
    return p


def perron_vector(p: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    n = p.shape[0]
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ p
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() <= tol * np.abs(nxt).max():
            return nxt
        pi = nxt
    raise NonConvergent(f"power iteration did not converge in {max_iter} iterations")


def directed_laplacian(g: DiGraph, walk: Walk = Walk.PAGERANK, teleport: float = 0.05) -> np.ndarray:
    """Chung's symmetric Laplacian of a random walk on the digraph."""
    n = g.num_nodes
    if n == 0:
        return np.zeros((0, 0))
    p = walk_operator(g, walk, teleport)
    phi = perron_vector(p)
    s = np.sqrt(phi)
    s_inv = _inv_sqrt(phi)
    m = s[:, None] * p * s_inv[None, :]
    lap = np.eye(n) - 0.5 * (m + m.T)
    return 0.5 * (lap + lap.T)


def dirlap_features(g: DiGraph, k_eigen: int = 10, teleport: float = 0.05) -> PEFeatures:
    n = g.num_nodes
    vecs, vals = spectral_features(directed_laplacian(g, Walk.PAGERANK, teleport), k_eigen)
    return PEFeatures(vecs.real, np.zeros((n, n, 0)), vals)


def compute_pe(g: DiGraph, cfg: PEConfig) -> PEFeatures:
    kind = cfg.kind
    if kind is PEKind.NONE:
        return PEFeatures.empty(g.num_nodes)
    if kind is PEKind.LAP:
        return lap_features(g, cfg.k_eigen, cfg.normalized)
    if kind is PEKind.DIRLAP:
        return dirlap_features(g, cfg.k_eigen, cfg.teleport)
    if kind in (PEKind.MAGLAP, PEKind.MULTI_MAGLAP):
        return maglap_features(g, cfg.potentials, cfg.k_eigen, cfg.normalized)
    return rrwp_features(g, cfg.K_walk, cfg.use_ppr, cfg.p_restart)


def batch_pe(graphs, cfg: PEConfig, n_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-padded PE tensors for a batch: (B,N,dn), (B,N,N,de), (B,dg)."""
    dn, de, dg = cfg.dims()
    b = len(graphs)
    node = np.zeros((b, n_max, dn))
    edge = np.zeros((b, n_max, n_max, de))
    glob = np.zeros((b, dg))
    for k, g in enumerate(graphs):
        n = g.num_nodes
        pe = compute_pe(g, cfg)
        node[k, :n] = pe.node
        edge[k, :n, :n] = pe.edge
        glob[k] = pe.graph
    return node, edge, glob
