"""Per-family validity tests for generated digraphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.cluster.vq import kmeans2
from scipy.special import xlogy

from ..errors import DegenerateSequence, InferenceFailure, InvalidParam, UnmappedClass
from ..graph import DiGraph, is_acyclic
from ..synth import default_price_m, gen_price

ALPHA = 0.05
EPS = 1e-6


@dataclass(frozen=True)
class ValidityResult:
    pvalue: float
    valid: bool


def wald_pvalue(p_hat, p) -> np.ndarray:
    """``1 - F_chi2_1(W)`` with ``W = (p_hat - p)^2 / (p_hat (1 - p_hat) + 1e-6)``."""
    p_hat = np.asarray(p_hat, dtype=np.float64)
    w = (p_hat - p) ** 2 / (p_hat * (1.0 - p_hat) + EPS)
    return stats.chi2.sf(w, df=1)


def validity_er(g: DiGraph, p: float, expect_dag: bool = False, alpha: float = ALPHA) -> ValidityResult:
    if not 0.0 < p < 1.0:
        raise InvalidParam("p must lie in (0, 1)")
    n = g.num_nodes
    if n <= 1:
        return ValidityResult(0.0, False)
    m_max = n * (n - 1) // 2 if expect_dag else n * (n - 1)
    pv = float(wald_pvalue(g.num_edges / m_max, p))
    ok = pv >= alpha and (not expect_dag or is_acyclic(g))
    return ValidityResult(pv, bool(ok))


# stochastic block model --------------------------------------------------------


def _block_counts(adj: np.ndarray, blocks: np.ndarray, k: int):
    onehot = np.eye(k)[blocks]
    edges = onehot.T @ adj @ onehot
    sizes = onehot.sum(axis=0)
    return edges, sizes


def _pairs(sizes: np.ndarray) -> np.ndarray:
    return np.outer(sizes, sizes) - np.diag(sizes)


def _sbm_loglik(edges: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    """Profile Bernoulli log-likelihood; leading axes of ``edges`` are batched."""
    safe = np.where(pairs > 0, pairs, 1.0)
    ph = edges / safe
    ll = xlogy(edges, ph) + xlogy(pairs - edges, 1.0 - ph)
    return np.where(pairs > 0, ll, 0.0).sum(axis=(-2, -1))


def _spectral_blocks(adj: np.ndarray, k_range, seed: int) -> np.ndarray:
    n = adj.shape[0]
    sym = adj + adj.T
    deg = sym.sum(axis=1)
    inv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    lap = np.eye(n) - inv[:, None] * sym * inv[None, :]
    vals, vecs = np.linalg.eigh(lap)
    lo, hi = k_range
    ks = [k for k in range(lo, hi + 1) if k < n]
    if not ks:
        return np.zeros(n, dtype=np.int64)
    k = max(ks, key=lambda k: vals[k] - vals[k - 1])
    emb = vecs[:, :k]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = emb / np.where(norms > 0, norms, 1.0)
    _, labels = kmeans2(emb, k, minit="++", seed=np.random.default_rng(seed))
    return labels.astype(np.int64)


def _relabel(blocks: np.ndarray) -> np.ndarray:
    _, out = np.unique(blocks, return_inverse=True)
    return out.astype(np.int64)


def recover_blocks(g: DiGraph, k_range=(2, 6), sweeps: int = 50, seed: int = 0) -> np.ndarray:
    """Spectral initialisation refined by greedy single-node moves.

    Each sweep visits nodes in order and moves a node to the block that
    maximises the directed-SBM profile likelihood; stops early at a fixed point.
    """
    n = g.num_nodes
    if n == 0:
        raise InferenceFailure("cannot infer blocks of an empty graph")
    adj = g.adjacency().astype(np.float64)
    blocks = _relabel(_spectral_blocks(adj, k_range, seed))
    k = int(blocks.max()) + 1
    for _ in range(sweeps):
        moved = False
        for v in range(n):
            onehot = np.eye(k)[blocks]
            out_v = adj[v] @ onehot
            in_v = adj[:, v] @ onehot
            edges, sizes = _block_counts(adj, blocks, k)
            r = blocks[v]
            edges[r, :] -= out_v
            edges[:, r] -= in_v
            sizes[r] -= 1
            cand_e = np.broadcast_to(edges, (k, k, k)).copy()
            idx = np.arange(k)
            cand_e[idx, idx, :] += out_v
            cand_e[idx, :, idx] += in_v
            cand_s = sizes[None, :] + np.eye(k)
            pairs = cand_s[:, :, None] * cand_s[:, None, :] - cand_s[:, :, None] * np.eye(k)[None]
            ll = _sbm_loglik(cand_e, pairs)
            best = int(np.argmax(ll))
            if best != r and ll[best] > ll[r] + 1e-9:
                blocks[v] = best
                moved = True
        blocks = _relabel(blocks)
        k = int(blocks.max()) + 1
        if not moved:
            break
    if k < 1:
        raise InferenceFailure("block recovery returned no blocks")
    return blocks


def validity_sbm(g: DiGraph, p_intra: float, p_inter: float, alpha: float = ALPHA, blocks=None,
                 seed: int = 0) -> ValidityResult:
    """Mean of per-entry Wald p-values over the recovered block matrix."""
    for name, val in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not 0.0 < val < 1.0:
            raise InvalidParam(f"{name} must lie in (0, 1)")
    if blocks is None:
        blocks = recover_blocks(g, seed=seed)
    blocks = _relabel(np.asarray(blocks))
    k = int(blocks.max()) + 1
    edges, sizes = _block_counts(g.adjacency().astype(np.float64), blocks, k)
    p_hat = edges / (_pairs(sizes) + EPS)
    target = np.where(np.eye(k, dtype=bool), p_intra, p_inter)
    pv = float(np.mean(wald_pvalue(p_hat, target)))
    return ValidityResult(pv, pv >= alpha)


# Price ------------------------------------------------------------------------


def _filtered_degrees(g: DiGraph) -> np.ndarray:
    """In-degrees above 1; in-degree is the preferential-attachment quantity."""
    deg = g.adjacency().sum(axis=0)
    return deg[deg > 1]


def validity_price(g: DiGraph, m: int | None = None, rng=None, alpha: float = ALPHA) -> ValidityResult:
    """Two-sample KS test of in-degrees (> 1) against a fresh Price graph."""
    n = g.num_nodes
    if m is None:
        m = default_price_m(max(n, 1))
    if m < 1:
        raise InvalidParam("m must be >= 1")
    d = _filtered_degrees(g)
    if d.size == 0:
        raise DegenerateSequence("no node has degree > 1")
    rng = np.random.default_rng(0) if rng is None else rng
    ref = _filtered_degrees(gen_price(n, min(m, n), rng))
    if ref.size == 0:
        raise DegenerateSequence("reference graph has no node with degree > 1")
    pv = float(stats.ks_2samp(d, ref).pvalue)
    return ValidityResult(pv, pv >= alpha)


# typed constraints ----------------------------------------------------------------


@dataclass(frozen=True)
class TypedConstraintRules:
    roles: dict  # node class -> role name
    allowed: frozenset  # {(source role, target role)}

    @classmethod
    def scene_graph(cls, object_classes, relationship_classes, attribute_classes) -> "TypedConstraintRules":
        roles = {c: "object" for c in object_classes}
        roles.update({c: "relationship" for c in relationship_classes})
        roles.update({c: "attribute" for c in attribute_classes})
        allowed = frozenset({("object", "relationship"), ("object", "attribute"), ("relationship", "object")})
        return cls(roles, allowed)


def validity_typed(g: DiGraph, rules: TypedConstraintRules) -> bool:
    missing = set(np.unique(g.node_types).tolist()) - set(rules.roles)
    if missing:
        raise UnmappedClass(f"node classes without a role: {sorted(missing)}")
    for i, j, _ in g.arcs():
        pair = (rules.roles[int(g.node_types[i])], rules.roles[int(g.node_types[j])])
        if pair not in rules.allowed:
            return False
    return True


def validity_fn_for(family: str, params: dict, alpha: float = ALPHA, seed: int = 0):
    """Boolean validity predicate for a synthetic family and its generator parameters."""
    family = family.upper()
    if family in ("ER", "ER_DAG"):
        dag = family == "ER_DAG"
        return lambda g: validity_er(g, params["p"], dag, alpha).valid
    if family == "SBM":
        return lambda g: g.num_nodes > 1 and validity_sbm(g, params["p_intra"], params["p_inter"], alpha,
                                                          seed=seed).valid
    if family == "PRICE":
        rng = np.random.default_rng(seed)

        def check(g):
            if not is_acyclic(g) or g.num_nodes < 2:
                return False
            try:
                return validity_price(g, params.get("m"), rng, alpha).valid
            except DegenerateSequence:
                return False

        return check
    if family == "DAG":
        return lambda g: g.num_nodes > 1 and is_acyclic(g)
    raise InvalidParam(f"no validity test for family {family!r}")
