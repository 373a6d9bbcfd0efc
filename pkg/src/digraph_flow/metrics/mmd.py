"""Maximum mean discrepancy between descriptor sets and the ratio summary."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptySet
from .descriptors import KINDS, describe

RATIO_FLOOR = 1e-12


def _stack(vectors, length: int) -> np.ndarray:
    out = np.zeros((len(vectors), length))
    for i, v in enumerate(vectors):
        out[i, : len(v)] = v
    totals = out.sum(axis=1, keepdims=True)
    return np.where(totals > 0, out / np.where(totals > 0, totals, 1.0), out)


def gaussian_tv_kernel(a: np.ndarray, b: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    tv = 0.5 * np.abs(a[:, None, :] - b[None, :, :]).sum(axis=-1)
    return np.exp(-(tv ** 2) / (2.0 * sigma ** 2))


def _within(k: np.ndarray) -> float:
    m = k.shape[0]
    if m < 2:
        return float(k.mean())
    return float((k.sum() - np.trace(k)) / (m * (m - 1)))


def mmd_from_kernels(kaa: np.ndarray, kbb: np.ndarray, kab: np.ndarray) -> float:
    """Unbiased MMD^2 clamped at 0; a singleton set uses the biased term."""
    return max(_within(kaa) + _within(kbb) - 2.0 * float(kab.mean()), 0.0)


def mmd(set_a, set_b, sigma: float = 1.0) -> float:
    """MMD^2 between two sets of histograms under the Gaussian-TV kernel.

    Histograms are zero-padded to a common length and normalised to sum 1.
    """
    if len(set_a) == 0 or len(set_b) == 0:
        raise EmptySet("MMD needs two non-empty sets")
    length = max(max(len(v) for v in set_a), max(len(v) for v in set_b))
    a, b = _stack(set_a, length), _stack(set_b, length)
    return mmd_from_kernels(gaussian_tv_kernel(a, a, sigma), gaussian_tv_kernel(b, b, sigma),
                            gaussian_tv_kernel(a, b, sigma))


@dataclass
class RatioSummary:
    ratio: float
    per_kind: dict = field(default_factory=dict)  # kind -> (mmd(gen, test), mmd(train, test), ratio)
    floored: list = field(default_factory=list)


def structural_mmd(gen, test, kinds=KINDS, sigma: float = 1.0) -> dict:
    return {k: mmd(describe(gen, k), describe(test, k), sigma) for k in kinds}


def ratio_summary(gen, test, train, kinds=KINDS, sigma: float = 1.0) -> RatioSummary:
    """Mean over descriptors of MMD(gen, test) / MMD(train, test), both floored at 1e-12."""
    if not gen or not test or not train:
        raise EmptySet("ratio summary needs three non-empty sets")
    per_kind, floored, ratios = {}, [], []
    for kind in kinds:
        d_test = describe(test, kind)
        num = mmd(describe(gen, kind), d_test, sigma)
        den = mmd(describe(train, kind), d_test, sigma)
        if den < RATIO_FLOOR:
            floored.append(kind)
        # Both terms are floored so two MMDs below resolution compare as equal.
        r = max(num, RATIO_FLOOR) / max(den, RATIO_FLOOR)
        per_kind[kind] = (num, den, r)
        ratios.append(r)
    return RatioSummary(float(np.mean(ratios)), per_kind, floored)
