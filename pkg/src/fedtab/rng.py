"""Counter-based pseudo-random generator used everywhere reproducibility matters.

The generator is SplitMix64 viewed as a keyed counter hash: output ``i`` of a
stream with key ``s`` is ``mix64((s + (i + 1) * GOLDEN) mod 2**64)``.  Streams
are split by folding tags into the key (``derive``), so independent substreams
(per round, per client, per epoch) never share state.  The full algorithm is
written out in README.md so other implementations can reproduce runs bit for
bit.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash, also used for trace digests."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def mix64(z: int) -> int:
    """SplitMix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4B9FE) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, str):
        return fnv1a64(tag.encode("utf-8"))
    return tag & MASK64


class Stream:
    """One deterministic random stream keyed by a 64-bit value.

    Consuming methods advance an internal counter; ``derive`` returns an
    independent stream without touching this one.
    """

    def __init__(self, seed: int):
        self.key = seed & MASK64
        self.counter = 0

    def derive(self, *tags: int | str) -> "Stream":
        key = self.key
        for t in tags:
            key = mix64(key ^ mix64(_tag_to_int(t)))
        return Stream(key)

    def u64(self) -> int:
        self.counter += 1
        return mix64((self.key + self.counter * GOLDEN) & MASK64)

    def u64_block(self, n: int) -> np.ndarray:
        """Vectorized batch of n outputs (same sequence as n calls to u64)."""
        start = self.counter + 1
        self.counter += n
        idx = np.arange(start, start + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.key) + idx * np.uint64(GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4B9FE)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            return z ^ (z >> np.uint64(31))

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1): top 53 bits of each u64 scaled by 2**-53."""
        return (self.u64_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller on consecutive uniform pairs."""
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 in (0,1], log is finite
        theta = 2.0 * math.pi * u2
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the top of the range."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        limit = (MASK64 + 1) - ((MASK64 + 1) % n)
        while True:
            u = self.u64()
            if u < limit:
                return u % n

    def permutation(self, n: int) -> np.ndarray:
        """Permutation of range(n): stable argsort of n fresh 64-bit keys."""
        return np.argsort(self.u64_block(n), kind="stable")

    def choice_weighted(self, weights: list[float]) -> int:
        total = float(sum(weights))
        x = self.uniform(1)[0] * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if x < acc:
                return i
        return len(weights) - 1
