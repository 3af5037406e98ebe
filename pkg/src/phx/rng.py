"""Deterministic 64-bit random streams for simulated execution.

The generator is SplitMix64 (Steele/Lea/Flood), fixed by its three constants:

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    out = z ^ (z >> 31)

Sub-streams are derived by hashing the parent seed with an FNV-1a 64 digest of
a textual key (step id plus iteration suffix), so draws in one step never shift
the draws of a sibling.
"""

import uuid

_MASK = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


class SplitMix64:
    """Seeded 64-bit stream; one instance per independent draw sequence."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return mix64(self.state)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def next_uniform(self, low: float, high: float) -> float:
        return low + self.next_float() * (high - low)

    def next_uuid(self) -> str:
        """UUID4-shaped identifier drawn from the stream (two u64 draws)."""
        raw = self.next_u64().to_bytes(8, "big") + self.next_u64().to_bytes(8, "big")
        return str(uuid.UUID(bytes=raw, version=4))


def substream(seed: int, key: str) -> SplitMix64:
    """Independent stream for (seed, key); key is typically step-id#iteration."""
    return SplitMix64(mix64((seed ^ fnv1a64(key)) & _MASK))


def derive_child_seed(seed: int, step_id: str) -> int:
    """Seed for a child execution launched by the given step."""
    return (seed ^ fnv1a64(step_id)) & _MASK
