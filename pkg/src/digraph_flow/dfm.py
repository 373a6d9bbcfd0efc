"""Discrete flow matching over categorical node and edge states.

Conventions: ``t = 0`` is pure noise and ``t = 1`` is clean data. Each node
and each ordered pair ``i != j`` is an independent categorical variable
interpolated as ``t * delta(z1) + (1 - t) * p_noise``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParam, ZeroSupport
from .graph import DiGraph

MARGINAL_FLOOR = 1e-8


class NoiseKind(str, enum.Enum):
    MARGINAL = "marginal"
    UNIFORM = "uniform"


@dataclass
class NoiseModel:
    node: np.ndarray
    edge: np.ndarray
    kind: NoiseKind = NoiseKind.UNIFORM

    def __post_init__(self):
        self.node = np.asarray(self.node, dtype=np.float64)
        self.edge = np.asarray(self.edge, dtype=np.float64)
        self.kind = NoiseKind(self.kind)
        for name, d in (("node", self.node), ("edge", self.edge)):
            if d.ndim != 1 or (d < 0).any() or abs(d.sum() - 1.0) > 1e-9:
                raise InvalidParam(f"{name} limit distribution is not a simplex")

    @classmethod
    def uniform(cls, X: int, E: int) -> "NoiseModel":
        return cls(np.full(X, 1.0 / X), np.full(E, 1.0 / E), NoiseKind.UNIFORM)

    @classmethod
    def marginal(cls, node_marginal, edge_marginal) -> "NoiseModel":
        def smooth(p):
            p = np.asarray(p, dtype=np.float64) + MARGINAL_FLOOR
            return p / p.sum()

        return cls(smooth(node_marginal), smooth(edge_marginal), NoiseKind.MARGINAL)

    @classmethod
    def from_stats(cls, stats, kind="marginal") -> "NoiseModel":
        if NoiseKind(kind) is NoiseKind.UNIFORM:
            return cls.uniform(len(stats.node_marginal), len(stats.edge_marginal))
        return cls.marginal(stats.node_marginal, stats.edge_marginal)

    def to_dict(self) -> dict:
        return {"node": self.node.tolist(), "edge": self.edge.tolist(), "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        return cls(d["node"], d["edge"], d["kind"])


class Distortion(str, enum.Enum):
    IDENTITY = "identity"
    POLYDEC = "polydec"
    COS = "cos"
    REVCOS = "revcos"
    POLYINC = "polyinc"


def distort(t, kind=Distortion.IDENTITY):
    """Monotone bijections of [0, 1] used to reshape the time grid."""
    kind = Distortion(kind)
    t = np.asarray(t, dtype=np.float64)
    if kind is Distortion.IDENTITY:
        out = t
    elif kind is Distortion.POLYDEC:
        out = 2 * t - t**2
    elif kind is Distortion.COS:
        out = (1 - np.cos(np.pi * t)) / 2
    elif kind is Distortion.REVCOS:
        out = 2 * t - (1 - np.cos(np.pi * t)) / 2
    else:
        out = t**2
    return out if out.ndim else float(out)


@dataclass
class SamplingKnobs:
    steps: int = 500
    distortion: Distortion = Distortion.IDENTITY
    omega: float = 0.0
    eta: float = 0.0
    final_argmax: bool = True
    pe_every: int = 1

    def __post_init__(self):
        self.distortion = Distortion(self.distortion)
        if self.steps < 1:
            raise InvalidParam("steps must be >= 1")
        if self.omega < 0 or self.eta < 0:
            raise InvalidParam("guidance and stochasticity must be non-negative")
        if self.pe_every < 1:
            raise InvalidParam("pe_every must be >= 1")

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "distortion": self.distortion.value,
            "omega": self.omega,
            "eta": self.eta,
            "final_argmax": self.final_argmax,
            "pe_every": self.pe_every,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingKnobs":
        return cls(**d)


# noising ---------------------------------------------------------------------


def interpolate(z1, kappa, limit) -> np.ndarray:
    """Row-wise ``kappa * onehot(z1) + (1 - kappa) * limit`` for class indices ``z1``."""
    z1 = np.asarray(z1)
    kappa = np.asarray(kappa, dtype=np.float64)
    c = limit.shape[0]
    k = np.broadcast_to(kappa, z1.shape)[..., None]
    return k * np.eye(c)[z1] + (1.0 - k) * limit


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one class per row of ``probs`` (last axis)."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1])[..., None] * cdf[..., -1:]
    return np.minimum((u >= cdf).sum(axis=-1), probs.shape[-1] - 1)


def noise_arrays(x, e, mask, t, nm: NoiseModel, rng, kappa_fn=None):
    """Vectorised noising for a padded batch; ``t`` has shape (B,)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    kappa = t if kappa_fn is None else kappa_fn(t)
    B, N = x.shape
    xt = sample_categorical(interpolate(x, kappa[:, None], nm.node), rng)
    et = sample_categorical(interpolate(e, kappa[:, None, None], nm.edge), rng)
    pair = mask[:, :, None] & mask[:, None, :] & ~np.eye(N, dtype=bool)[None]
    xt = np.where(mask, xt, 0)
    et = np.where(pair, et, 0)
    return xt, et


def noise_sample(g1: DiGraph, t: float, nm: NoiseModel, rng: np.random.Generator) -> DiGraph:
    """Noisy copy of ``g1`` at time ``t``."""
    if not 0.0 <= t <= 1.0:
        raise InvalidParam("t must lie in [0, 1]")
    mask = np.ones((1, g1.num_nodes), dtype=bool)
    xt, et = noise_arrays(g1.node_types[None], g1.edge_types[None], mask, [t], nm, rng)
    return DiGraph(xt[0], et[0])


# rates -----------------------------------------------------------------------


def _support_count(t, limit) -> np.ndarray:
    """|{j : p_{t|1}(j | z1) > 0}| for each clean class z1 (shape (..., C))."""
    t = np.asarray(t, dtype=np.float64)[..., None, None]
    c = limit.shape[0]
    p = t * np.eye(c) + (1 - t) * limit  # [z1, j]
    return (p > 0).sum(axis=-1)


def cond_rate(z_t: int, z1: int, t: float, limit) -> np.ndarray:
    """Conditional rate vector out of ``z_t`` given clean class ``z1``.

    Off-diagonal entries are ``ReLU[dp(j) - dp(z_t)] / (Z * p(z_t | z1))``
    with ``dp(j) = delta(j, z1) - limit(j)``; the diagonal makes the row sum 0.
    """
    limit = np.asarray(limit, dtype=np.float64)
    c = limit.shape[0]
    p_cur = t * (z_t == z1) + (1 - t) * limit[z_t]
    if p_cur <= 0:
        raise ZeroSupport(f"p_t|1({z_t} | {z1}) = 0 at t={t}")
    dp = np.eye(c)[z1] - limit
    z = int(_support_count(t, limit)[z1])
    rate = np.maximum(dp - dp[z_t], 0.0) / (z * p_cur)
    rate[z_t] = 0.0
    rate[z_t] = -rate.sum()
    return rate


def _cond_rate_table(t, limit) -> np.ndarray:
    """R[..., z1, z_t, j] for all class triples; zero where p(z_t | z1) = 0."""
    c = limit.shape[0]
    t = np.asarray(t, dtype=np.float64)
    eye = np.eye(c)
    dp = eye - limit  # [z1, j]
    num = np.maximum(dp[:, None, :] - dp[:, :, None], 0.0)  # [z1, z_t, j]
    tt = t[..., None, None]
    p_cur = tt * eye + (1 - tt) * limit[None, :]  # [..., z1, z_t]
    z = _support_count(t, limit)[..., :, None]  # [..., z1, 1]
    denom = z * p_cur
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(denom > 0, 1.0 / denom, 0.0)
    return num * inv[..., None]


def predicted_rate(pred, z_t, t, limit) -> np.ndarray:
    """Expected conditional rates under ``pred`` (clean-class distribution).

    ``pred`` has shape (..., C) and ``z_t`` shape (...); ``t`` is a scalar or
    broadcasts against ``z_t``. Returns off-diagonal rates (..., C) with zero
    at the current class.
    """
    limit = np.asarray(limit, dtype=np.float64)
    c = limit.shape[0]
    z_t = np.asarray(z_t)
    t = np.asarray(t, dtype=np.float64)
    table = _cond_rate_table(t, limit)  # ([t-shape], z1, z_t, j)
    cur = np.eye(c)[z_t]
    if t.ndim == 0:
        rows = np.einsum("azj,...z->...aj", table, cur)
    else:
        rows = np.einsum("...azj,...z->...aj", np.broadcast_to(table, z_t.shape + (c, c, c)), cur)
    return np.einsum("...a,...aj->...j", pred, rows)


def _p_cur_given_clean(z_t, t, limit) -> np.ndarray:
    """p_{t|1}(z_t | j) for every candidate clean class j: shape (..., C)."""
    c = limit.shape[0]
    t = np.asarray(t, dtype=np.float64)[..., None]
    return t * np.eye(c)[z_t] + (1 - t) * limit[z_t][..., None]


def apply_guidance(rate, pred, z_t, t, omega, limit) -> np.ndarray:
    """Add ``omega * pred(j) / (Z * p(z_t | j))`` toward every ``j != z_t``."""
    if omega == 0:
        return rate
    limit = np.asarray(limit, dtype=np.float64)
    c = limit.shape[0]
    z_t = np.asarray(z_t)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), z_t.shape)
    p_cur = _p_cur_given_clean(z_t, t, limit)
    z = _support_count(t, limit)
    with np.errstate(divide="ignore", invalid="ignore"):
        extra = np.where(p_cur > 0, omega * pred / (z * p_cur), 0.0)
    extra = extra * (1 - np.eye(c)[z_t])
    return rate + extra


def apply_stochasticity(rate, pred, z_t, t, eta, limit) -> np.ndarray:
    """Add ``eta * E_pred[p_{t|1}(j | z1)]`` toward every ``j != z_t``.

    For fixed ``z1`` the auxiliary generator ``R(i, j) = p(j | z1)`` satisfies
    detailed balance with respect to ``p(. | z1)``.
    """
    if eta == 0:
        return rate
    limit = np.asarray(limit, dtype=np.float64)
    c = limit.shape[0]
    z_t = np.asarray(z_t)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), z_t.shape)[..., None]
    expected = t * pred + (1 - t) * limit  # sum_z1 pred(z1) p(j | z1)
    return rate + eta * expected * (1 - np.eye(c)[z_t])


def total_rate(pred, z_t, t, limit, omega=0.0, eta=0.0) -> np.ndarray:
    r = predicted_rate(pred, z_t, t, limit)
    r = apply_guidance(r, pred, z_t, t, omega, limit)
    return apply_stochasticity(r, pred, z_t, t, eta, limit)


def euler_probs(rate, z_t, dt) -> np.ndarray:
    """Jump distribution for one Euler step; overflowing rows are rescaled."""
    c = rate.shape[-1]
    off = rate * (1 - np.eye(c)[z_t]) * dt
    off = np.maximum(off, 0.0)
    total = off.sum(axis=-1, keepdims=True)
    scale = np.where(total > 1.0, 1.0 / np.maximum(total, 1e-300), 1.0)
    off = off * scale
    stay = 1.0 - off.sum(axis=-1)
    return off + np.eye(c)[z_t] * np.maximum(stay, 0.0)[..., None]


def euler_step(z_t, pred, t, dt, limit, rng, omega=0.0, eta=0.0) -> np.ndarray:
    rate = total_rate(pred, z_t, t, limit, omega, eta)
    return sample_categorical(euler_probs(rate, z_t, dt), rng)


def time_grid(steps: int, distortion=Distortion.IDENTITY) -> np.ndarray:
    return np.asarray(distort(np.linspace(0.0, 1.0, steps + 1), distortion), dtype=np.float64)


# sampling --------------------------------------------------------------------


def _node_counts(source, count, rng) -> np.ndarray:
    if hasattr(source, "sample_num_nodes"):
        return np.asarray(source.sample_num_nodes(rng, size=count), dtype=np.int64)
    if isinstance(source, (int, np.integer)):
        return np.full(count, int(source), dtype=np.int64)
    ns = np.asarray(source, dtype=np.int64)
    if ns.shape[0] != count:
        raise InvalidParam("explicit node counts must match the sample count")
    return ns


def init_noise(ns, nm: NoiseModel, rng):
    n_max = int(ns.max())
    B = len(ns)
    mask = np.arange(n_max)[None, :] < ns[:, None]
    x = sample_categorical(np.broadcast_to(nm.node, (B, n_max, nm.node.shape[0])), rng)
    e = sample_categorical(np.broadcast_to(nm.edge, (B, n_max, n_max, nm.edge.shape[0])), rng)
    pair = mask[:, :, None] & mask[:, None, :] & ~np.eye(n_max, dtype=bool)[None]
    return np.where(mask, x, 0), np.where(pair, e, 0), mask


def _to_graphs(x, e, mask) -> list[DiGraph]:
    out = []
    for b in range(x.shape[0]):
        n = int(mask[b].sum())
        out.append(DiGraph(x[b, :n], e[b, :n, :n]))
    return out


def sample_arrays(denoiser, nm: NoiseModel, knobs: SamplingKnobs, ns, rng):
    """Euler CTMC integration for one padded batch of node counts ``ns``.

    ``denoiser(x_t, e_t, mask, t)`` returns clean-class distributions
    ``(B,N,X)`` and ``(B,N,N,E)``. All variables in a step are updated from
    the frozen pre-step state.
    """
    ns = np.asarray(ns, dtype=np.int64)
    x, e, mask = init_noise(ns, nm, rng)
    N = x.shape[1]
    pair = mask[:, :, None] & mask[:, None, :] & ~np.eye(N, dtype=bool)[None]
    grid = time_grid(knobs.steps, knobs.distortion)
    B = len(ns)
    for k in range(knobs.steps):
        t, dt = grid[k], grid[k + 1] - grid[k]
        px, pe = denoiser(x, e, mask, np.full(B, t))
        x_new = euler_step(x, px, t, dt, nm.node, rng, knobs.omega, knobs.eta)
        e_new = euler_step(e, pe, t, dt, nm.edge, rng, knobs.omega, knobs.eta)
        x = np.where(mask, x_new, 0)
        e = np.where(pair, e_new, 0)
    if knobs.final_argmax:
        px, pe = denoiser(x, e, mask, np.ones(B))
        x = np.where(mask, px.argmax(axis=-1), 0)
        e = np.where(pair, pe.argmax(axis=-1), 0)
    return x, e, mask


def sample(denoiser, nm: NoiseModel, knobs: SamplingKnobs, node_source, rng, count: int = 1,
           batch_size: int = 64) -> list[DiGraph]:
    """Draw ``count`` graphs; node counts come from ``node_source``.

    ``node_source`` is an :class:`~digraph_flow.synth.EmpiricalStats`, an int,
    or an explicit sequence of node counts.
    """
    ns = _node_counts(node_source, count, rng)
    graphs: list[DiGraph] = []
    for start in range(0, count, batch_size):
        chunk = ns[start:start + batch_size]
        x, e, mask = sample_arrays(denoiser, nm, knobs, chunk, rng)
        graphs.extend(_to_graphs(x, e, mask))
    return graphs
