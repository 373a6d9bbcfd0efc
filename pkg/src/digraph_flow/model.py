"""Dual-attention graph transformer used as the denoiser.

Parameters live in a flat ``dict[str, np.ndarray]``; the forward pass wraps
them in :class:`~digraph_flow.autodiff.Tensor` so the same code path gives
predictions and exact gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import AllMasked, InvalidParam, NonFinite, ShapeMismatch

LOG_FLOOR = math.log(1e-30)


@dataclass
class ModelConfig:
    n_layers: int = 5
    d_x: int = 256
    d_e: int = 64
    d_y: int = 64
    n_heads: int = 8
    ff_x: int = 256
    ff_e: int = 128
    ff_y: int = 128
    hidden_x: int = 256
    hidden_e: int = 128
    hidden_y: int = 128
    num_node_classes: int = 1
    num_edge_classes: int = 2
    pe_node: int = 0
    pe_edge: int = 0
    pe_graph: int = 0
    layer_norm: bool = True

    def __post_init__(self):
        widths = [self.d_x, self.d_e, self.d_y, self.n_heads, self.ff_x, self.ff_e, self.ff_y,
                  self.hidden_x, self.hidden_e, self.hidden_y, self.num_node_classes, self.num_edge_classes]
        if min(widths) < 1 or self.n_layers < 1:
            raise InvalidParam("all widths and the layer count must be >= 1")
        if self.d_x % self.n_heads:
            raise InvalidParam(f"d_x={self.d_x} not divisible by n_heads={self.n_heads}")

    @property
    def d_q(self) -> int:
        return self.d_x // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _param_shapes(cfg: ModelConfig) -> dict:
    dx, de, dy = cfg.d_x, cfg.d_e, cfg.d_y
    in_x = cfg.num_node_classes + cfg.pe_node
    in_e = cfg.num_edge_classes + cfg.pe_edge
    in_y = 1 + cfg.pe_graph
    shapes = {}

    def lin(name, fan_in, fan_out):
        shapes[name + ".w"] = (fan_in, fan_out)
        shapes[name + ".b"] = (fan_out,)

    def norm(name, d):
        shapes[name + ".g"] = (d,)
        shapes[name + ".b"] = (d,)

    lin("in_x.0", in_x, cfg.hidden_x)
    lin("in_x.1", cfg.hidden_x, dx)
    lin("in_e.0", in_e, cfg.hidden_e)
    lin("in_e.1", cfg.hidden_e, de)
    lin("in_y.0", in_y, cfg.hidden_y)
    lin("in_y.1", cfg.hidden_y, dy)
    for l in range(cfg.n_layers):
        p = f"l{l}."
        for role in ("q_s", "k_s", "v_s", "q_t", "k_t", "v_t"):
            lin(p + role, dx, dx)
        for role in ("e_mul_s", "e_add_s", "e_mul_t", "e_add_t"):
            lin(p + role, de, dx)
        lin(p + "y_e_mul", dy, dx)
        lin(p + "y_e_add", dy, dx)
        lin(p + "e_out", dx, de)
        lin(p + "y_x_mul", dy, dx)
        lin(p + "y_x_add", dy, dx)
        lin(p + "gate", 2 * dx, dx)
        lin(p + "x_out", dx, dx)
        lin(p + "y_y", dy, dy)
        lin(p + "x_pna", 4 * dx, dy)
        lin(p + "e_pna", 4 * de, dy)
        lin(p + "y_out", dy, dy)
        lin(p + "ff_x.0", dx, cfg.ff_x)
        lin(p + "ff_x.1", cfg.ff_x, dx)
        lin(p + "ff_e.0", de, cfg.ff_e)
        lin(p + "ff_e.1", cfg.ff_e, de)
        lin(p + "ff_y.0", dy, cfg.ff_y)
        lin(p + "ff_y.1", cfg.ff_y, dy)
        if cfg.layer_norm:
            for name, d in (("x", dx), ("e", de), ("y", dy)):
                norm(p + f"norm_{name}", d)
                norm(p + f"norm_ff_{name}", d)
    lin("out_x.0", dx, cfg.hidden_x)
    lin("out_x.1", cfg.hidden_x, cfg.num_node_classes)
    lin("out_e.0", de, cfg.hidden_e)
    lin("out_e.1", cfg.hidden_e, cfg.num_edge_classes)
    return shapes


def param_names(cfg: ModelConfig) -> list[str]:
    return list(_param_shapes(cfg))


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict:
    """Fan-in scaled uniform weights, zero biases, unit norm gains."""
    params = {}
    for name, shape in _param_shapes(cfg).items():
        if name.endswith(".w"):
            bound = 1.0 / math.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith(".g"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


# building blocks -----------------------------------------------------------


def film(e, e_attn, w1, w2, b1=None, b2=None) -> Tensor:
    """Feature-wise modulation ``E W1 + (E W2) * E_attn + E_attn``."""
    e, e_attn = ad.as_tensor(e), ad.as_tensor(e_attn)
    add_term = ad.linear(e, w1, b1)
    mul_term = ad.linear(e, w2, b2)
    if add_term.shape[-1] != e_attn.shape[-1]:
        raise ShapeMismatch(f"modulation width {add_term.shape[-1]} != {e_attn.shape[-1]}")
    return add_term + ad.mul(mul_term, e_attn) + e_attn


def pna_stats(x, mask) -> Tensor:
    """concat(max, min, mean, population std) over axis 1, mask-aware.

    ``x`` is ``(B, M, d)`` and ``mask`` is ``(B, M)``.
    """
    x = ad.as_tensor(x)
    mask = np.asarray(mask, dtype=bool)
    count = mask.sum(axis=1)
    if (count == 0).any():
        raise AllMasked("pooling over a graph with no unmasked positions")
    m3 = mask[..., None].astype(np.float64)
    inv_n = (1.0 / count)[:, None]
    mx = ad.masked_max(x, mask[..., None], axis=1)
    mn = ad.masked_min(x, mask[..., None], axis=1)
    mean = ad.mul(ad.tsum(ad.mul(x, m3), axis=1), inv_n)
    centred = ad.mul(x - ad.reshape(mean, (mean.shape[0], 1, mean.shape[1])), m3)
    var = ad.mul(ad.tsum(ad.mul(centred, centred), axis=1), inv_n)
    std = ad.safe_sqrt(var)
    return ad.concat([mx, mn, mean, std], axis=-1)


def pna(x, mask, w, b=None) -> Tensor:
    return ad.linear(pna_stats(x, mask), w, b)


def _lin(P, name, x):
    return ad.linear(x, P[name + ".w"], P[name + ".b"])


def _norm(P, name, x, cfg):
    if not cfg.layer_norm:
        return x
    return ad.layer_norm(x, P[name + ".g"], P[name + ".b"])


def _unsq(t: Tensor, axes) -> Tensor:
    shape = list(t.shape)
    for a in sorted(axes):
        shape.insert(a, 1)
    return ad.reshape(t, tuple(shape))


def dual_attention_layer(P, prefix, X, E, y, mask, cfg: ModelConfig, force_gate=None):
    """One dual-attention block followed by feed-forward residuals.

    ``X`` (B,N,dx), ``E`` (B,N,N,de), ``y`` (B,dy), ``mask`` (B,N) bool.
    ``force_gate`` overrides the learned gate value (testing hook).
    """
    B, N, dx = X.shape
    if E.shape[:3] != (B, N, N) or y.shape[0] != B or mask.shape != (B, N):
        raise ShapeMismatch("inconsistent layer input shapes")
    h, dq = cfg.n_heads, cfg.d_q
    p = prefix
    m_node = mask[..., None].astype(np.float64)
    m_pair = (mask[:, :, None] & mask[:, None, :])[..., None].astype(np.float64)

    Xn = _norm(P, p + "norm_x", X, cfg)
    En = _norm(P, p + "norm_e", E, cfg)
    yn = _norm(P, p + "norm_y", y, cfg)

    def proj(role):
        return ad.reshape(ad.mul(_lin(P, p + role, Xn), m_node), (B, N, h, dq))

    Qs, Ks, Vs = proj("q_s"), proj("k_s"), proj("v_s")
    Qt, Kt, Vt = proj("q_t"), proj("k_t"), proj("v_t")
    scale = 1.0 / math.sqrt(dq)

    # Y_ST[i, j] = Q_S[i] * K_T[j];  Y_TS[i, j] = Q_T[i] * K_S[j]
    Y_st = ad.mul(ad.mul(_unsq(Qs, [2]), _unsq(Kt, [1])), scale)
    Y_ts = ad.mul(ad.mul(_unsq(Qt, [2]), _unsq(Ks, [1])), scale)

    Et = ad.swapaxes(En, 1, 2)
    mul_s = ad.reshape(_lin(P, p + "e_mul_s", En), (B, N, N, h, dq))
    add_s = ad.reshape(_lin(P, p + "e_add_s", En), (B, N, N, h, dq))
    mul_t = ad.reshape(_lin(P, p + "e_mul_t", Et), (B, N, N, h, dq))
    add_t = ad.reshape(_lin(P, p + "e_add_t", Et), (B, N, N, h, dq))
    Y_st = ad.mul(Y_st, mul_s + 1.0) + add_s
    Y_ts = ad.mul(Y_ts, mul_t + 1.0) + add_t

    # edge update from the source-to-target map only
    flat = ad.reshape(Y_st, (B, N, N, dx))
    y_add = _unsq(_lin(P, p + "y_e_add", yn), [1, 2])
    y_mul = _unsq(_lin(P, p + "y_e_mul", yn), [1, 2])
    E_upd = y_add + ad.mul(y_mul + 1.0, flat)
    E_new = ad.mul(E + _lin(P, p + "e_out", E_upd), m_pair)

    # node update: one softmax over the 2N concatenated keys
    logits = ad.concat([Y_st, Y_ts], axis=2)  # (B, N, 2N, h, dq)
    key_mask = np.concatenate([mask, mask], axis=1)[:, None, :, None, None]
    A = ad.masked_softmax(logits, key_mask, axis=2)
    V = ad.concat([Vt, Vs], axis=1)  # targets for the ST block, sources for TS
    X_aggr = ad.reshape(ad.tsum(ad.mul(A, _unsq(V, [1])), axis=2), (B, N, dx))
    x_add = _unsq(_lin(P, p + "y_x_add", yn), [1])
    x_mul = _unsq(_lin(P, p + "y_x_mul", yn), [1])
    X_mod = x_add + ad.mul(x_mul + 1.0, X_aggr)
    if force_gate is None:
        gate = ad.sigmoid(_lin(P, p + "gate", ad.concat([Xn, X_aggr], axis=-1)))
    else:
        gate = Tensor(np.full((B, N, dx), float(force_gate)))
    X_gated = ad.mul(gate + 1.0, X) + ad.mul(1.0 - gate, X_mod)
    X_new = ad.mul(_lin(P, p + "x_out", X_gated), m_node)

    # global update
    pair_mask = mask[:, :, None] & mask[:, None, :]
    y_new = (
        y
        + _lin(P, p + "y_y", yn)
        + pna(Xn, mask, P[p + "x_pna.w"], P[p + "x_pna.b"])
        + pna(ad.reshape(En, (B, N * N, cfg.d_e)), pair_mask.reshape(B, N * N),
              P[p + "e_pna.w"], P[p + "e_pna.b"])
    )
    y_new = _lin(P, p + "y_out", y_new)

    # feed-forward residuals
    def ffn(name, t):
        hdn = ad.relu(_lin(P, p + f"ff_{name}.0", _norm(P, p + f"norm_ff_{name}", t, cfg)))
        return t + _lin(P, p + f"ff_{name}.1", hdn)

    X_new = ad.mul(ffn("x", X_new), m_node)
    E_new = ad.mul(ffn("e", E_new), m_pair)
    y_new = ffn("y", y_new)
    return X_new, E_new, y_new


def forward(params, cfg: ModelConfig, x_onehot, e_onehot, mask, t, pe_node=None, pe_edge=None,
            pe_graph=None, track=False):
    """Class logits for a padded batch.

    ``x_onehot`` (B,N,X), ``e_onehot`` (B,N,N,E), ``mask`` (B,N) bool, ``t``
    (B,) times. Returns ``(node_logits, edge_logits, P)`` where ``P`` holds
    the Tensor-wrapped parameters (gradients land there after backward).
    """
    mask = np.asarray(mask, dtype=bool)
    B, N = mask.shape
    P = {k: Tensor(v, requires_grad=track) for k, v in params.items()}
    if pe_node is None:
        pe_node = np.zeros((B, N, 0))
    if pe_edge is None:
        pe_edge = np.zeros((B, N, N, 0))
    if pe_graph is None:
        pe_graph = np.zeros((B, 0))
    pm = mask[:, :, None] & mask[:, None, :]
    # Padded slots are replaced (not multiplied) so garbage cannot leak in.
    xin = np.where(mask[..., None], np.concatenate([x_onehot, pe_node], axis=-1), 0.0)
    ein = np.where(pm[..., None], np.concatenate([e_onehot, pe_edge], axis=-1), 0.0)
    yin = np.concatenate([np.asarray(t, dtype=np.float64).reshape(B, 1), pe_graph], axis=-1)
    if xin.shape[-1] != cfg.num_node_classes + cfg.pe_node or ein.shape[-1] != cfg.num_edge_classes + cfg.pe_edge:
        raise ShapeMismatch("input feature widths do not match the model configuration")

    m_node = mask[..., None].astype(np.float64)
    m_pair = pm[..., None].astype(np.float64)
    X = ad.mul(_lin(P, "in_x.1", ad.relu(_lin(P, "in_x.0", Tensor(xin)))), m_node)
    E = ad.mul(_lin(P, "in_e.1", ad.relu(_lin(P, "in_e.0", Tensor(ein)))), m_pair)
    y = _lin(P, "in_y.1", ad.relu(_lin(P, "in_y.0", Tensor(yin))))
    for l in range(cfg.n_layers):
        X, E, y = dual_attention_layer(P, f"l{l}.", X, E, y, mask, cfg)
    node_logits = _lin(P, "out_x.1", ad.relu(_lin(P, "out_x.0", X)))
    edge_logits = _lin(P, "out_e.1", ad.relu(_lin(P, "out_e.0", E)))
    return node_logits, edge_logits, P


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class ClampCounter:
    """Counts log-probabilities clamped at the 1e-30 floor."""

    def __init__(self):
        self.count = 0


def cross_entropy(node_logp: Tensor, edge_logp: Tensor, x_clean, e_clean, mask, lam: float,
                  reduction: str = "sum", counter: ClampCounter | None = None) -> Tensor:
    """Weighted node + edge cross-entropy over unmasked positions (``i != j``).

    ``reduction="sum"`` gives the per-batch total; ``"mean"`` averages nodes
    and edges separately before weighting.
    """
    if lam < 0:
        raise InvalidParam("edge weight must be non-negative")
    mask = np.asarray(mask, dtype=bool)
    B, N = mask.shape
    pair = mask[:, :, None] & mask[:, None, :] & ~np.eye(N, dtype=bool)[None]
    nx_ = node_logp.shape[-1]
    ne_ = edge_logp.shape[-1]
    sel_x = np.eye(nx_)[x_clean] * mask[..., None]
    sel_e = np.eye(ne_)[e_clean] * pair[..., None]
    if counter is not None:
        counter.count += int(((node_logp.data < LOG_FLOOR) & (sel_x > 0)).sum())
        counter.count += int(((edge_logp.data < LOG_FLOOR) & (sel_e > 0)).sum())
    lx = ad.clamp_min(node_logp, LOG_FLOOR)
    le = ad.clamp_min(edge_logp, LOG_FLOOR)
    node_term = ad.tsum(ad.mul(lx, sel_x))
    edge_term = ad.tsum(ad.mul(le, sel_e))
    if reduction == "mean":
        node_term = ad.mul(node_term, 1.0 / max(mask.sum(), 1))
        edge_term = ad.mul(edge_term, 1.0 / max(pair.sum(), 1))
    out = ad.neg(node_term) - ad.mul(edge_term, lam)
    if not np.isfinite(out.data):
        raise NonFinite("loss is not finite")
    return out


def loss_and_grads(params, cfg, x_onehot, e_onehot, mask, t, x_clean, e_clean, lam,
                   pe=(None, None, None), reduction="sum", counter=None):
    node_logits, edge_logits, P = forward(params, cfg, x_onehot, e_onehot, mask, t, *pe, track=True)
    loss = cross_entropy(ad.log_softmax(node_logits), ad.log_softmax(edge_logits), x_clean, e_clean,
                         mask, lam, reduction, counter)
    loss.backward()
    grads = {k: (P[k].grad if P[k].grad is not None else np.zeros_like(v)) for k, v in params.items()}
    return float(loss.data), grads
