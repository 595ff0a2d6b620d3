"""Portable 64-bit pseudo-random numbers (splitmix64).

Every random draw in the package flows through this generator so that runs
are reproducible bit-for-bit across platforms. The update constants are the
standard splitmix64 ones:

    state    += 0x9E3779B97F4A7C15
    mix step 1: z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    mix step 2: z = (z ^ (z >> 27)) * 0x94D49BBB133111EB
    output   : z ^ (z >> 31)
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D49BBB133111EB

# FNV-1a, used only to hash stream tags into seed material.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _fnv1a(tag: str) -> int:
    h = _FNV_OFFSET
    for byte in tag.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def derive_seed(seed: int, tag: str) -> int:
    """Derive an independent stream seed from a master seed and a stage tag."""
    return _mix((seed & _MASK) ^ _fnv1a(tag))


class Rng:
    """Deterministic splitmix64 stream."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return _mix(self._state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53 high bits give a uniform double in [0, 1).
        return lo + (hi - lo) * ((self.next_u64() >> 11) / float(1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi] inclusive. Modulo bias is irrelevant at our ranges."""
        if hi < lo:
            raise ValueError("empty range")
        span = hi - lo + 1
        return lo + self.next_u64() % span

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def sample(self, seq, k: int) -> list:
        """k distinct elements, order deterministic (partial Fisher-Yates)."""
        items = list(seq)
        if k > len(items):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = self.randint(i, len(items) - 1)
            items[i], items[j] = items[j], items[i]
        return items[:k]

    def spawn(self, tag: str) -> "Rng":
        return Rng(derive_seed(self._state, tag))
