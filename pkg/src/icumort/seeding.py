"""Deterministic seed derivation and a small portable PRNG.

All randomness flows from a single global seed. Per-stage seeds are derived
by folding the stage name into the seed; event-level seeds additionally fold
integer keys (stay id, channel index, hour). Keyed derivation makes every
random choice independent of iteration order and input file ordering, so
re-runs and parallel runs agree bit for bit.

The generator is splitmix64 (Steele, Lea and Flood's 64-bit mixing step),
chosen because it is tiny, well documented, and trivially portable.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 step: advance by the golden-ratio increment and mix."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix(acc: int, value: int) -> int:
    return splitmix64(acc ^ (value & _MASK64))


def derive_seed(root: int, *parts: int | str) -> int:
    """Derive a child seed from a root seed and a sequence of keys.

    Integer keys are folded directly; string keys are folded as their UTF-8
    bytes in 8-byte little-endian chunks. The result is a 64-bit seed that is
    a pure function of (root, parts).
    """
    acc = splitmix64(root & _MASK64)
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            for i in range(0, len(data), 8):
                acc = _mix(acc, int.from_bytes(data[i : i + 8], "little"))
        else:
            acc = _mix(acc, int(part))
    return acc


class SplitMix64:
    """Sequential splitmix64 stream with uniform integer helpers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = _MASK64 - (_MASK64 + 1) % n
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % n

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle driven by this stream."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
