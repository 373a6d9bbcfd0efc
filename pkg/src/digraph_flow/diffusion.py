"""Discrete-time diffusion with marginal transition matrices and a cosine schedule.

Time follows the flow-matching orientation: ``t' = 1 - t/T`` so ``t' = 0`` is
noise and ``t' = 1`` is (almost) clean data. The cumulative forward kernel
from clean data to ``t'`` is ``alpha_bar(t') I + (1 - alpha_bar(t')) 1 m^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dfm import NoiseModel, init_noise, noise_arrays, sample_categorical, _to_graphs, _node_counts
from .errors import InvalidParam, ZeroSupport
from .graph import DiGraph

DEFAULT_OFFSET = 0.008


def alpha_bar(t_prime, s: float = DEFAULT_OFFSET):
    t_prime = np.asarray(t_prime, dtype=np.float64)
    out = np.cos(0.5 * np.pi * (1.0 - t_prime + s) / (1.0 + s)) ** 2
    return out if out.ndim else float(out)


@dataclass
class DiffusionSchedule:
    T: int = 500
    s: float = DEFAULT_OFFSET
    final_argmax: bool = True

    def __post_init__(self):
        if self.T < 1:
            raise InvalidParam("T must be >= 1")
        if self.s < 0:
            raise InvalidParam("schedule offset must be non-negative")

    def grid(self) -> np.ndarray:
        """t' values visited by the reverse chain, from 0 up to 1."""
        return np.arange(self.T + 1) / self.T

    def alpha_bar(self, t_prime):
        return alpha_bar(t_prime, self.s)

    def step_alphas(self) -> np.ndarray:
        """Per-step retention ``alpha^t`` for DTMC steps 0..T (clean to noise).

        Step 0 moves data onto the grid point ``t' = 1``; the running product
        of the first ``k + 1`` entries equals ``alpha_bar(1 - k/T)``.
        """
        ab = self.alpha_bar(1.0 - np.arange(self.T + 1) / self.T)
        out = np.empty_like(ab)
        out[0] = ab[0]
        out[1:] = ab[1:] / ab[:-1]
        return out

    def to_dict(self) -> dict:
        return {"T": self.T, "s": self.s, "final_argmax": self.final_argmax}

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionSchedule":
        return cls(**d)


def transition_matrix(alpha: float, marginal) -> np.ndarray:
    """``alpha I + (1 - alpha) 1 m^T``; row ``i`` is ``q(next | current = i)``."""
    m = np.asarray(marginal, dtype=np.float64)
    return alpha * np.eye(m.shape[0]) + (1.0 - alpha) * np.outer(np.ones_like(m), m)


def forward_noise(g1: DiGraph, t_prime: float, nm: NoiseModel, rng, s: float = DEFAULT_OFFSET) -> DiGraph:
    """Single-shot closed-form noising to ``t'``."""
    if not 0.0 <= t_prime <= 1.0:
        raise InvalidParam("t' must lie in [0, 1]")
    mask = np.ones((1, g1.num_nodes), dtype=bool)
    xt, et = noise_arrays(g1.node_types[None], g1.edge_types[None], mask, [t_prime], nm, rng,
                          kappa_fn=lambda t: alpha_bar(t, s))
    return DiGraph(xt[0], et[0])


def posterior_table(ab_now: float, ab_next: float, marginal) -> np.ndarray:
    """P[z1, z_t, z_next] = q(z_next | z_t, z1) for one reverse step.

    ``ab_now = alpha_bar(t')`` at the noisier point and ``ab_next`` at
    ``t' + dt'``. Rows with ``q(z_t | z1) = 0`` are all zero.
    """
    m = np.asarray(marginal, dtype=np.float64)
    step = ab_now / ab_next if ab_next > 0 else 0.0
    q_step = transition_matrix(step, m)  # [z_next, z_t]
    q_bar_next = transition_matrix(ab_next, m)  # [z1, z_next]
    q_bar_now = transition_matrix(ab_now, m)  # [z1, z_t]
    num = q_step.T[None, :, :] * q_bar_next[:, None, :]  # [z1, z_t, z_next]
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(q_bar_now[:, :, None] > 0, num / q_bar_now[:, :, None], 0.0)
    return post


def posterior(z_t: int, z1: int, t_prime: float, dt_prime: float, nm_marginal, s: float = DEFAULT_OFFSET) -> np.ndarray:
    """Forward-process posterior over the next (cleaner) state."""
    m = np.asarray(nm_marginal, dtype=np.float64)
    ab_now = alpha_bar(t_prime, s)
    ab_next = alpha_bar(min(t_prime + dt_prime, 1.0), s)
    q = ab_now * (z_t == z1) + (1 - ab_now) * m[z_t]
    if q <= 0:
        raise ZeroSupport(f"q({z_t} | {z1}) = 0 at t'={t_prime}")
    return posterior_table(ab_now, ab_next, m)[z1, z_t]


def reverse_kernel(pred, z_t, table) -> np.ndarray:
    """sum_z1 pred(z1) * posterior(. | z_t, z1), shape (..., C)."""
    c = table.shape[0]
    rows = np.einsum("azj,...z->...aj", table, np.eye(c)[z_t])
    k = np.einsum("...a,...aj->...j", pred, rows)
    total = k.sum(axis=-1, keepdims=True)
    return np.where(total > 0, k / np.where(total > 0, total, 1.0), np.eye(c)[z_t])


def dd_sample_arrays(denoiser, nm: NoiseModel, schedule: DiffusionSchedule, ns, rng):
    ns = np.asarray(ns, dtype=np.int64)
    x, e, mask = init_noise(ns, nm, rng)
    N = x.shape[1]
    B = len(ns)
    pair = mask[:, :, None] & mask[:, None, :] & ~np.eye(N, dtype=bool)[None]
    grid = schedule.grid()
    for k in range(schedule.T):
        ab_now, ab_next = schedule.alpha_bar(grid[k]), schedule.alpha_bar(grid[k + 1])
        px, pe = denoiser(x, e, mask, np.full(B, grid[k]))
        kx = reverse_kernel(px, x, posterior_table(ab_now, ab_next, nm.node))
        ke = reverse_kernel(pe, e, posterior_table(ab_now, ab_next, nm.edge))
        x = np.where(mask, sample_categorical(kx, rng), 0)
        e = np.where(pair, sample_categorical(ke, rng), 0)
    if schedule.final_argmax:
        px, pe = denoiser(x, e, mask, np.ones(B))
        x = np.where(mask, px.argmax(axis=-1), 0)
        e = np.where(pair, pe.argmax(axis=-1), 0)
    return x, e, mask


def dd_sample(denoiser, nm: NoiseModel, schedule: DiffusionSchedule, node_source, rng, count: int = 1,
              batch_size: int = 64) -> list[DiGraph]:
    ns = _node_counts(node_source, count, rng)
    graphs: list[DiGraph] = []
    for start in range(0, count, batch_size):
        x, e, mask = dd_sample_arrays(denoiser, nm, schedule, ns[start:start + batch_size], rng)
        graphs.extend(_to_graphs(x, e, mask))
    return graphs
