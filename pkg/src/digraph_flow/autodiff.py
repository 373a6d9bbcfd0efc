"""Minimal tape-based reverse-mode differentiation over numpy arrays.

Only the primitives the denoiser needs are provided. Every op records a
closure mapping the output gradient to parent gradients; ``backward`` walks
the tape in reverse topological order.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.data + b.data, _parents=(a, b), _backward=bw)


def neg(a) -> Tensor:
    return Tensor(-a.data, _parents=(a,), _backward=lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(a.data * b.data, _parents=(a, b), _backward=bw)


def matmul(x, w) -> Tensor:
    """``x[..., k] @ w[k, m]`` with a 2-D right operand."""
    x, w = as_tensor(x), as_tensor(w)

    def bw(g):
        gx = g @ w.data.T
        lead = x.data.reshape(-1, x.shape[-1])
        gw = lead.T @ g.reshape(-1, g.shape[-1])
        return gx, gw

    return Tensor(x.data @ w.data, _parents=(x, w), _backward=bw)


def linear(x, w, b=None) -> Tensor:
    out = matmul(x, w)
    return out if b is None else add(out, b)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(out, _parents=(a,), _backward=bw)


def exp(a) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, _parents=(a,), _backward=lambda g: (g * out,))


def relu(a) -> Tensor:
    pos = a.data > 0
    return Tensor(np.where(pos, a.data, 0.0), _parents=(a,), _backward=lambda g: (g * pos,))


def sigmoid(a) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor(out, _parents=(a,), _backward=lambda g: (g * out * (1.0 - out),))


def safe_sqrt(a) -> Tensor:
    """sqrt with a zero (not infinite) derivative at 0."""
    out = np.sqrt(np.maximum(a.data, 0.0))

    def bw(g):
        d = np.zeros_like(out)
        nz = out > 0
        d[nz] = 0.5 / out[nz]
        return (g * d,)

    return Tensor(out, _parents=(a,), _backward=bw)


def reciprocal(a) -> Tensor:
    out = 1.0 / a.data
    return Tensor(out, _parents=(a,), _backward=lambda g: (-g * out * out,))


def reshape(a, shape) -> Tensor:
    return Tensor(a.data.reshape(shape), _parents=(a,), _backward=lambda g: (g.reshape(a.shape),))


def swapaxes(a, ax1, ax2) -> Tensor:
    return Tensor(
        np.swapaxes(a.data, ax1, ax2), _parents=(a,), _backward=lambda g: (np.swapaxes(g, ax1, ax2),)
    )


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors), _backward=bw)


def masked_softmax(a, mask, axis=-1) -> Tensor:
    """Softmax along ``axis`` where ``mask == False`` entries get exactly 0."""
    mask = np.broadcast_to(mask, a.shape)
    z = np.where(mask, a.data, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor(out, _parents=(a,), _backward=bw)


def log_softmax(a, axis=-1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return Tensor(out, _parents=(a,), _backward=bw)


def _masked_extreme(a, mask, axis, fn, fill):
    mask = np.broadcast_to(mask, a.shape)
    filled = np.where(mask, a.data, fill)
    idx = fn(filled, axis=axis)
    out = np.take_along_axis(filled, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    out = np.where(np.isfinite(out), out, 0.0)

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (full * mask,)

    return Tensor(out, _parents=(a,), _backward=bw)


def masked_max(a, mask, axis) -> Tensor:
    return _masked_extreme(a, mask, axis, np.argmax, -np.inf)


def masked_min(a, mask, axis) -> Tensor:
    return _masked_extreme(a, mask, axis, np.argmin, np.inf)


def clamp_min(a, lo: float) -> Tensor:
    keep = a.data >= lo
    return Tensor(np.where(keep, a.data, lo), _parents=(a,), _backward=lambda g: (g * keep,))


def layer_norm(x, gain, bias, eps=1e-5) -> Tensor:
    d = x.shape[-1]
    mu = mul(tsum(x, axis=-1, keepdims=True), 1.0 / d)
    xc = x - mu
    var = mul(tsum(mul(xc, xc), axis=-1, keepdims=True), 1.0 / d)
    inv = reciprocal(safe_sqrt(add(var, eps)))
    return add(mul(mul(xc, inv), gain), bias)
