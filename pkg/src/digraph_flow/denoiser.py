"""Denoisers that plug into the samplers, the MLE baseline, training and checkpoints.

Every denoiser is a callable ``f(x_t, e_t, mask, t) -> (px, pe)`` over a
padded batch, returning clean-class distributions of shape (B,N,X) and
(B,N,N,E).
"""

from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dfm import Distortion, NoiseModel, distort, noise_arrays
from .diffusion import alpha_bar, DEFAULT_OFFSET
from .errors import CheckpointError, EmptyDataset, InvalidParam
from .graph import DiGraph, collate, one_hot
from .model import ClampCounter, ModelConfig, forward, init_params, loss_and_grads, param_names, softmax
from .posenc import PEConfig, PEKind, batch_pe
from .synth import empirical_stats

log = logging.getLogger(__name__)

MAGIC = b"DGFLOWCK1"
ENGINES = ("dfm", "dd")


# oracle ----------------------------------------------------------------------


def oracle_posterior(z_t, kappa, prior, limit) -> np.ndarray:
    """Exact ``p(z1 | z_t)`` for an independent categorical prior.

    ``p(z_t | z1) = kappa * delta(z_t, z1) + (1 - kappa) * limit(z_t)``.
    ``z_t`` has shape (...); ``kappa`` broadcasts against it.
    """
    prior = np.asarray(prior, dtype=np.float64)
    limit = np.asarray(limit, dtype=np.float64)
    z_t = np.asarray(z_t)
    k = np.asarray(kappa, dtype=np.float64)[..., None]
    lik = k * np.eye(prior.shape[0])[z_t] + (1.0 - k) * limit[z_t][..., None]
    post = lik * prior
    total = post.sum(axis=-1, keepdims=True)
    return np.where(total > 0, post / np.where(total > 0, total, 1.0), prior)


class OracleDenoiser:
    """Closed-form posterior for targets with independent node and edge classes.

    ``engine="dfm"`` uses ``kappa = t``; ``engine="dd"`` uses ``kappa =
    alpha_bar(t')``.
    """

    def __init__(self, node_prior, edge_prior, nm: NoiseModel, engine: str = "dfm", s: float = DEFAULT_OFFSET):
        if engine not in ENGINES:
            raise InvalidParam(f"unknown engine {engine!r}")
        self.node_prior = np.asarray(node_prior, dtype=np.float64)
        self.edge_prior = np.asarray(edge_prior, dtype=np.float64)
        self.nm = nm
        self.engine = engine
        self.s = s

    @classmethod
    def erdos_renyi(cls, p: float, nm: NoiseModel | None = None, engine: str = "dfm") -> "OracleDenoiser":
        nm = nm or NoiseModel.uniform(1, 2)
        return cls([1.0], [1.0 - p, p], nm, engine)

    def kappa(self, t):
        t = np.asarray(t, dtype=np.float64)
        return t if self.engine == "dfm" else alpha_bar(t, self.s)

    def __call__(self, x, e, mask, t):
        k = self.kappa(t)
        px = oracle_posterior(x, k[:, None], self.node_prior, self.nm.node)
        pe = oracle_posterior(e, k[:, None, None], self.edge_prior, self.nm.edge)
        return px, pe


# MLE baseline ----------------------------------------------------------------


@dataclass
class MLEModel:
    node_counts: dict  # n -> probability
    node_probs: np.ndarray  # (X,)
    edge_probs: np.ndarray  # (X, X, E); rows of unseen class pairs hold the pooled marginal

    def to_dict(self) -> dict:
        return {"node_counts": {str(k): v for k, v in self.node_counts.items()},
                "node_probs": self.node_probs.tolist(), "edge_probs": self.edge_probs.tolist()}


def mle_fit(graphs, X: int, E: int) -> MLEModel:
    if len(graphs) == 0:
        raise EmptyDataset("cannot fit the MLE baseline on an empty dataset")
    stats = empirical_stats(graphs, X, E)
    counts = np.zeros((X, X, E))
    for g in graphs:
        n = g.num_nodes
        off = ~np.eye(n, dtype=bool)
        ca = np.broadcast_to(g.node_types[:, None], (n, n))[off]
        cb = np.broadcast_to(g.node_types[None, :], (n, n))[off]
        np.add.at(counts, (ca, cb, g.edge_types[off]), 1.0)
    totals = counts.sum(axis=-1, keepdims=True)
    probs = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), stats.edge_marginal)
    return MLEModel(stats.node_counts, stats.node_marginal, probs)


def mle_sample(model: MLEModel, rng: np.random.Generator) -> DiGraph:
    ns = np.array(sorted(model.node_counts))
    n = int(rng.choice(ns, p=[model.node_counts[k] for k in ns]))
    x = rng.choice(len(model.node_probs), size=n, p=model.node_probs)
    probs = model.edge_probs[x[:, None], x[None, :]]  # (n, n, E)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random((n, n))[..., None] * cdf[..., -1:]
    e = np.minimum((u >= cdf).sum(axis=-1), probs.shape[-1] - 1)
    np.fill_diagonal(e, 0)
    return DiGraph(x, e)


# neural denoiser -------------------------------------------------------------


def _batch_graphs(x, e, mask) -> list[DiGraph]:
    return [DiGraph(x[b, : int(mask[b].sum())], e[b, : int(mask[b].sum()), : int(mask[b].sum())])
            for b in range(x.shape[0])]


def model_inputs(x, e, mask, cfg: ModelConfig, pe_cfg: PEConfig):
    """One-hot encodings plus positional features for a padded batch."""
    xo = one_hot(x, cfg.num_node_classes)
    eo = one_hot(e, cfg.num_edge_classes)
    if pe_cfg.kind is PEKind.NONE:
        return xo, eo, (None, None, None)
    pe = batch_pe(_batch_graphs(x, e, mask), pe_cfg, x.shape[1])
    return xo, eo, pe


class NeuralDenoiser:
    """Wraps trained parameters; positional encodings are computed on the noisy input.

    With ``pe_every > 1`` the encodings are refreshed only on every
    ``pe_every``-th call and reused in between.
    """

    def __init__(self, params: dict, cfg: ModelConfig, pe_cfg: PEConfig, pe_every: int = 1):
        self.params = params
        self.cfg = cfg
        self.pe_cfg = pe_cfg
        self.pe_every = max(int(pe_every), 1)
        self._calls = 0
        self._pe = None
        self._shape = None

    def __call__(self, x, e, mask, t):
        stale = self._pe is None or self._shape != x.shape
        if stale or self._calls % self.pe_every == 0:
            _, _, self._pe = model_inputs(x, e, mask, self.cfg, self.pe_cfg)
            self._shape = x.shape
            self._calls = 0
        self._calls += 1
        xo = one_hot(x, self.cfg.num_node_classes)
        eo = one_hot(e, self.cfg.num_edge_classes)
        nl, el, _ = forward(self.params, self.cfg, xo, eo, mask, t, *self._pe)
        return softmax(nl.data), softmax(el.data)


# training --------------------------------------------------------------------


@dataclass
class TrainConfig:
    engine: str = "dfm"
    epochs: int = 100
    batch_size: int = 16
    lr: float = 2e-4
    weight_decay: float = 1e-12
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    lam: float = 5.0
    t_distortion: Distortion = Distortion.IDENTITY
    noise: str = "marginal"
    T: int = 500
    s: float = DEFAULT_OFFSET
    seed: int = 0
    max_seconds: float | None = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise InvalidParam(f"engine must be one of {ENGINES}")
        self.t_distortion = Distortion(self.t_distortion)
        self.betas = tuple(self.betas)
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidParam("epochs must be >= 0 and batch_size >= 1")
        if self.lr <= 0 or self.lam < 0 or self.weight_decay < 0:
            raise InvalidParam("lr must be positive; lam and weight_decay non-negative")
        if self.noise not in ("uniform", "marginal"):
            raise InvalidParam("noise must be 'uniform' or 'marginal'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_distortion"] = self.t_distortion.value
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class AdamW:
    """Adam with decoupled weight decay, operating on a flat parameter dict."""

    def __init__(self, params: dict, lr=2e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-12):
        self.lr, self.betas, self.eps, self.wd = lr, tuple(betas), eps, weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def step(self, params: dict, grads: dict) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for k in params:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            update = (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            params[k] = params[k] * (1.0 - self.lr * self.wd) - self.lr * update


def sample_times(tc: TrainConfig, size: int, rng: np.random.Generator) -> np.ndarray:
    """Training times: continuous ``U[0,1]`` (DFM) or the reverse-chain grid (DD)."""
    if tc.engine == "dd":
        return rng.integers(0, tc.T, size=size) / tc.T
    return np.asarray(distort(rng.random(size), tc.t_distortion), dtype=np.float64)


def noise_batch(x, e, mask, t, nm: NoiseModel, tc: TrainConfig, rng):
    kappa_fn = (lambda tt: alpha_bar(tt, tc.s)) if tc.engine == "dd" else None
    return noise_arrays(x, e, mask, t, nm, rng, kappa_fn=kappa_fn)


@dataclass
class TrainState:
    params: dict
    opt: AdamW
    step: int = 0
    epoch: int = 0
    trace: list = field(default_factory=list)  # (epoch, step, mean loss)


def batch_loss(params, cfg, pe_cfg, tc, nm, batch_graphs, rng, grads=True):
    b = collate(batch_graphs)
    t = sample_times(tc, b.batch_size, rng)
    xt, et = noise_batch(b.x, b.e, b.mask, t, nm, tc, rng)
    xo, eo, pe = model_inputs(xt, et, b.mask, cfg, pe_cfg)
    counter = ClampCounter()
    loss, g = loss_and_grads(params, cfg, xo, eo, b.mask, t, b.x, b.e, tc.lam, pe, "mean", counter)
    if counter.count:
        log.warning("clamped %d log-probabilities at the floor", counter.count)
    return loss, g


def train(graphs, cfg: ModelConfig, pe_cfg: PEConfig, tc: TrainConfig, nm: NoiseModel | None = None,
          state: TrainState | None = None, val_graphs=None, callback=None) -> TrainState:
    """Minibatch training; epochs continue from ``state`` when resuming.

    Randomness for epoch ``k`` comes from ``default_rng([seed, k])`` so a
    resumed run matches an uninterrupted one at epoch granularity.
    """
    if len(graphs) == 0:
        raise EmptyDataset("training set is empty")
    if nm is None:
        nm = noise_model_for(graphs, cfg, tc.noise)
    if state is None:
        params = init_params(cfg, np.random.default_rng([tc.seed, 2**31 - 1]))
        state = TrainState(params, AdamW(params, tc.lr, tc.betas, tc.eps, tc.weight_decay))
    start = time.monotonic()
    while state.epoch < tc.epochs:
        rng = np.random.default_rng([tc.seed, state.epoch])
        order = rng.permutation(len(graphs))
        losses = []
        for i in range(0, len(order), tc.batch_size):
            loss, grads = batch_loss(state.params, cfg, pe_cfg, tc, nm, [graphs[j] for j in order[i:i + tc.batch_size]], rng)
            state.opt.step(state.params, grads)
            state.step += 1
            losses.append(loss)
        row = [state.epoch, state.step, float(np.mean(losses))]
        if val_graphs:
            vrng = np.random.default_rng([tc.seed, state.epoch, 1])
            row.append(float(np.mean([
                batch_loss(state.params, cfg, pe_cfg, tc, nm, val_graphs[i:i + tc.batch_size], vrng)[0]
                for i in range(0, len(val_graphs), tc.batch_size)])))
        state.trace.append(tuple(row))
        state.epoch += 1
        if callback is not None:
            callback(state)
        if tc.max_seconds is not None and time.monotonic() - start > tc.max_seconds:
            log.warning("stopping after %d epochs: time budget exhausted", state.epoch)
            break
    return state


def noise_model_for(graphs, cfg: ModelConfig, kind: str = "marginal") -> NoiseModel:
    if kind == "uniform":
        return NoiseModel.uniform(cfg.num_node_classes, cfg.num_edge_classes)
    return NoiseModel.from_stats(empirical_stats(graphs, cfg.num_node_classes, cfg.num_edge_classes))


# checkpoints -----------------------------------------------------------------


def save_checkpoint(path, header: dict, tensors: dict) -> None:
    """Magic string, u32 header length, JSON header, then little-endian float32 tensors.

    Tensor names and shapes are listed in the header in storage order.
    """
    header = dict(header)
    header["tensors"] = [[k, list(v.shape)] for k, v in tensors.items()]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".partial")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict, dict]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    if not raw.startswith(MAGIC):
        raise CheckpointError("not a checkpoint (bad magic)")
    off = len(MAGIC)
    try:
        (hlen,) = struct.unpack_from("<I", raw, off)
        header = json.loads(raw[off + 4: off + 4 + hlen].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    off += 4 + hlen
    tensors = {}
    for name, shape in header.get("tensors", []):
        size = int(np.prod(shape, dtype=np.int64))
        if off + 4 * size > len(raw):
            raise CheckpointError("truncated checkpoint")
        tensors[name] = np.frombuffer(raw, dtype="<f4", count=size, offset=off).astype(np.float64).reshape(shape)
        off += 4 * size
    if off != len(raw):
        raise CheckpointError("trailing bytes after the last tensor")
    return header, tensors


def state_tensors(state: TrainState, cfg: ModelConfig) -> dict:
    out = {}
    for k in param_names(cfg):
        out[k] = state.params[k]
    for k in param_names(cfg):
        out["adam.m." + k] = state.opt.m[k]
        out["adam.v." + k] = state.opt.v[k]
    return out


def restore_state(header: dict, tensors: dict, cfg: ModelConfig, tc: TrainConfig) -> TrainState:
    names = param_names(cfg)
    missing = [k for k in names if k not in tensors]
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {missing[:3]}")
    params = {k: tensors[k].copy() for k in names}
    opt = AdamW(params, tc.lr, tc.betas, tc.eps, tc.weight_decay)
    if all("adam.m." + k in tensors for k in names):
        opt.m = {k: tensors["adam.m." + k].copy() for k in names}
        opt.v = {k: tensors["adam.v." + k].copy() for k in names}
    opt.step_count = int(header.get("step", 0))
    trace = [tuple(r) for r in header.get("trace", [])]
    return TrainState(params, opt, int(header.get("step", 0)), int(header.get("epoch", 0)), trace)
