"""Deterministic, portable pseudo-randomness.

Everything that influences a game trajectory draws from SplitMix64: a
64-bit counter-based generator whose state is a single integer, so copying
a game state costs nothing and traces replay bit-for-bit on any platform.
Independent streams (per episode, per role) are derived with `derive_seed`.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit value."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(root: int, *path: int) -> int:
    """Derive an independent 64-bit seed from a root seed and an index path.

    Deterministic in (root, path); distinct paths give decorrelated streams.
    """
    s = mix64((root + _GOLDEN) & MASK64)
    for part in path:
        s = mix64((s ^ mix64((part + _GOLDEN) & MASK64)) & MASK64)
    return s


class SplitMix64:
    """Minimal uniform generator with an (exactly) copyable one-word state."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def copy(self) -> "SplitMix64":
        g = SplitMix64.__new__(SplitMix64)
        g._state = self._state
        return g

    @property
    def state(self) -> int:
        return self._state

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        return mix64(self._state)

    def uniform(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) via the multiply-shift reduction."""
        return (self.next_u64() * n) >> 64

    def choice_weighted(self, weights) -> int:
        """Index sampled proportionally to non-negative weights."""
        total = 0.0
        for w in weights:
            total += w
        u = self.uniform() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return len(weights) - 1
