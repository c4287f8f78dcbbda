"""Portable seedable PRNG shared by every stochastic routine.

The generator is xoshiro256** (Blackman & Vigna) with its state expanded from
a 64-bit seed by splitmix64.  The compiled kernels implement the identical
algorithm, so a given seed yields the same stream on either backend.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_M53 = 1.0 / (1 << 53)


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step. Returns ``(next_state, output)``."""
    x = (x + _GOLDEN) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Mix ``keys`` into ``seed`` to get an independent substream seed."""
    _, out = splitmix64(seed & MASK64)
    for k in keys:
        _, out = splitmix64((out ^ ((k * _GOLDEN) & MASK64)) & MASK64)
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** generator.

    >>> g = Xoshiro256(42)
    >>> 0.0 <= g.random() < 1.0
    True
    """

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        x = seed & MASK64
        x, self.s0 = splitmix64(x)
        x, self.s1 = splitmix64(x)
        x, self.s2 = splitmix64(x)
        x, self.s3 = splitmix64(x)

    def state(self) -> tuple[int, int, int, int]:
        return (self.s0, self.s1, self.s2, self.s3)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _TWO_M53

    def randbelow(self, n: int) -> int:
        """Integer in ``[0, n)`` by multiply-shift (bias below 2**-40 for small n)."""
        return (self.next_u64() * n) >> 64

    def bernoulli(self, p: float) -> bool:
        return self.random() < p

    def geometric(self, p: float) -> int:
        """Trials up to and including the first success, support {1, 2, ...}.

        Inverse CDF with ``log1p`` so that ``p`` as small as 1e-13 stays exact
        enough for slot counts around 1e17.
        """
        if p >= 1.0:
            return 1
        u = self.random()
        return int(math.floor(math.log1p(-u) / math.log1p(-p))) + 1
