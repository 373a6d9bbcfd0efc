"""Validity, uniqueness and novelty of a generated set."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import EmptySet
from ..isomorphism import DEFAULT_TIMEOUT, IsoResult, are_isomorphic, wl_hash


@dataclass
class VUNResult:
    validity: float
    uniqueness: float
    novelty: float
    vun: float
    flags: list  # per generated graph: (valid, unique, novel)


class _IsoIndex:
    """Graphs bucketed by WL hash; exact checks only within a bucket."""

    def __init__(self, timeout: float):
        self.timeout = timeout
        self.buckets: dict[str, list] = {}

    def add(self, g, h=None):
        self.buckets.setdefault(h or wl_hash(g), []).append(g)

    def contains(self, g, h=None) -> bool:
        for other in self.buckets.get(h or wl_hash(g), ()):
            if are_isomorphic(g, other, self.timeout) is IsoResult.YES:
                return True
        return False


def vun(gen, train, validity_fn, timeout: float = DEFAULT_TIMEOUT) -> VUNResult:
    """Fractions of valid, unique and novel graphs; a timeout counts as non-isomorphic."""
    if not gen:
        raise EmptySet("generated set is empty")
    seen = _IsoIndex(timeout)
    known = _IsoIndex(timeout)
    for g in train:
        known.add(g)
    flags = []
    for g in gen:
        h = wl_hash(g)
        valid = bool(validity_fn(g))
        unique = not seen.contains(g, h)
        novel = not known.contains(g, h)
        seen.add(g, h)
        flags.append((valid, unique, novel))
    n = len(gen)
    return VUNResult(
        validity=sum(f[0] for f in flags) / n,
        uniqueness=sum(f[1] for f in flags) / n,
        novelty=sum(f[2] for f in flags) / n,
        vun=sum(all(f) for f in flags) / n,
        flags=flags,
    )
