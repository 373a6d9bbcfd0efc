"""Synthetic digraph families, dataset assembly and empirical statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, InvalidParam
from .graph import DiGraph
from .io import write_graphs, write_manifest

SPLITS = ("train", "val", "test")
FAMILIES = ("ER", "ER_DAG", "PRICE", "SBM")

DEFAULT_PARAMS = {
    "ER": {"n_min": 20, "n_max": 80, "p": 0.6},
    "ER_DAG": {"n_min": 20, "n_max": 80, "p": 0.3},
    "PRICE": {"n": 64, "m": None},
    "SBM": {
        "k_min": 2,
        "k_max": 5,
        "size_min": 20,
        "size_max": 40,
        "p_intra": 0.3,
        "p_inter": 0.05,
    },
}


def _check_prob(p, name="p"):
    if not 0.0 <= p <= 1.0:
        raise InvalidParam(f"{name} must lie in [0, 1], got {p}")


def gen_er(n_min: int, n_max: int, p: float, dag: bool, rng: np.random.Generator) -> DiGraph:
    """Erdos-Renyi digraph; with ``dag`` only arcs i -> j with i > j are drawn."""
    if not 1 <= n_min <= n_max:
        raise InvalidParam(f"need 1 <= n_min <= n_max, got {n_min}, {n_max}")
    _check_prob(p)
    n = int(rng.integers(n_min, n_max + 1))
    adj = rng.random((n, n)) < p
    if dag:
        adj = np.tril(adj, k=-1)
    else:
        np.fill_diagonal(adj, False)
    return DiGraph.from_adjacency(adj)


def default_price_m(n: int) -> int:
    return max(1, int(round(math.log2(n))))


def gen_price(n: int, m: int | None, rng: np.random.Generator) -> DiGraph:
    """Price preferential-attachment DAG grown from a single seed node.

    Each new node draws ``m`` targets (with replacement) from the bag, then
    the bag receives the new node and every drawn target. Repeated draws
    collapse into one arc, so out-degrees are at most ``m``.
    """
    if m is None:
        m = default_price_m(n)
    if not n >= m >= 1:
        raise InvalidParam(f"need n >= m >= 1, got n={n}, m={m}")
    adj = np.zeros((n, n), dtype=np.int64)
    bag = [0]
    for i in range(1, n):
        picks = rng.integers(0, len(bag), size=m)
        targets = [bag[k] for k in picks]
        adj[i, targets] = 1
        bag.append(i)
        bag.extend(targets)
    return DiGraph.from_adjacency(adj)


def gen_sbm(
    k_min: int,
    k_max: int,
    size_min: int,
    size_max: int,
    p_intra: float,
    p_inter: float,
    rng: np.random.Generator,
    return_blocks: bool = False,
):
    """Directed stochastic block model with random block count and sizes."""
    if not 2 <= k_min <= k_max:
        raise InvalidParam(f"need 2 <= k_min <= k_max, got {k_min}, {k_max}")
    if not 1 <= size_min <= size_max:
        raise InvalidParam(f"need 1 <= size_min <= size_max, got {size_min}, {size_max}")
    _check_prob(p_intra, "p_intra")
    _check_prob(p_inter, "p_inter")
    k = int(rng.integers(k_min, k_max + 1))
    sizes = rng.integers(size_min, size_max + 1, size=k)
    blocks = np.repeat(np.arange(k), sizes)
    probs = np.where(blocks[:, None] == blocks[None, :], p_intra, p_inter)
    adj = rng.random(probs.shape) < probs
    np.fill_diagonal(adj, False)
    g = DiGraph.from_adjacency(adj)
    if return_blocks:
        return g, blocks
    return g


@dataclass
class DatasetSpec:
    family: str
    params: dict = field(default_factory=dict)
    train: int = 128
    val: int = 32
    test: int = 40
    seed: int = 0
    name: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParam(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        merged = dict(DEFAULT_PARAMS[self.family])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise InvalidParam(f"unknown parameters for {self.family}: {sorted(unknown)}")
        merged.update(self.params)
        self.params = merged
        for split in SPLITS:
            if getattr(self, split) <= 0:
                raise InvalidParam(f"{split} count must be positive")
        if self.name is None:
            self.name = self.family.lower()

    @property
    def counts(self) -> dict:
        return {s: getattr(self, s) for s in SPLITS}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        counts = d.pop("counts", None)
        if counts is not None:
            d.update(counts)
        allowed = {"family", "params", "train", "val", "test", "seed", "name"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidParam(f"unknown dataset spec fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def graph_rng(seed: int, split: str, index: int) -> np.random.Generator:
    """Independent stream per graph, keyed by (seed, split, index)."""
    return np.random.default_rng([seed, SPLITS.index(split), index])


def generate_graph(spec: DatasetSpec, rng: np.random.Generator):
    """Return ``(graph, blocks_or_None)`` for one draw of the family."""
    p = spec.params
    if spec.family == "ER":
        return gen_er(p["n_min"], p["n_max"], p["p"], False, rng), None
    if spec.family == "ER_DAG":
        return gen_er(p["n_min"], p["n_max"], p["p"], True, rng), None
    if spec.family == "PRICE":
        return gen_price(p["n"], p["m"], rng), None
    g, blocks = gen_sbm(
        p["k_min"], p["k_max"], p["size_min"], p["size_max"], p["p_intra"], p["p_inter"], rng,
        return_blocks=True,
    )
    return g, blocks


def generate_splits(spec: DatasetSpec) -> tuple[dict, dict]:
    graphs, blocks = {}, {}
    for split in SPLITS:
        gs, bs = [], []
        for idx in range(getattr(spec, split)):
            g, b = generate_graph(spec, graph_rng(spec.seed, split, idx))
            gs.append(g)
            bs.append(None if b is None else b.tolist())
        graphs[split] = gs
        blocks[split] = bs
    return graphs, blocks


def summary_stats(graphs) -> dict:
    nodes = np.array([g.num_nodes for g in graphs])
    edges = np.array([g.num_edges for g in graphs])
    return {
        "min_nodes": int(nodes.min()),
        "max_nodes": int(nodes.max()),
        "avg_nodes": float(nodes.mean()),
        "min_edges": int(edges.min()),
        "max_edges": int(edges.max()),
        "avg_edges": float(edges.mean()),
    }


def make_dataset(spec: DatasetSpec, out_dir) -> dict:
    """Generate all splits into ``out_dir`` and write ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    graphs, blocks = generate_splits(spec)
    splits = {}
    for split in SPLITS:
        fname = f"{split}.jsonl"
        write_graphs(graphs[split], out_dir / fname)
        splits[split] = fname
    everything = [g for s in SPLITS for g in graphs[s]]
    meta = {
        "family": spec.family,
        "params": spec.params,
        "seed": spec.seed,
        "counts": spec.counts,
        "stats": summary_stats(everything),
    }
    if spec.family == "SBM":
        meta["blocks"] = blocks
    manifest = {"name": spec.name, "X": 1, "E": 2, "splits": splits, "meta": meta}
    write_manifest(manifest, out_dir / "manifest.json")
    return manifest


@dataclass
class EmpiricalStats:
    node_marginal: np.ndarray
    edge_marginal: np.ndarray
    node_counts: dict  # n -> probability

    def sample_num_nodes(self, rng: np.random.Generator, size=None):
        ns = np.array(sorted(self.node_counts))
        ps = np.array([self.node_counts[n] for n in ns])
        return rng.choice(ns, size=size, p=ps)


def empirical_stats(graphs, X: int, E: int) -> EmpiricalStats:
    """Pooled class frequencies over nodes and ordered pairs ``i != j``."""
    if len(graphs) == 0:
        raise EmptyDataset("cannot estimate statistics from an empty dataset")
    node_counts = np.zeros(X)
    edge_counts = np.zeros(E)
    sizes: dict[int, int] = {}
    for g in graphs:
        n = g.num_nodes
        node_counts += np.bincount(g.node_types, minlength=X)[:X]
        off = ~np.eye(n, dtype=bool)
        edge_counts += np.bincount(g.edge_types[off], minlength=E)[:E]
        sizes[n] = sizes.get(n, 0) + 1
    total = sum(sizes.values())
    node_m = node_counts / node_counts.sum() if node_counts.sum() > 0 else np.full(X, 1.0 / X)
    edge_m = edge_counts / edge_counts.sum() if edge_counts.sum() > 0 else np.eye(E)[0]
    return EmpiricalStats(node_m, edge_m, {n: c / total for n, c in sorted(sizes.items())})
