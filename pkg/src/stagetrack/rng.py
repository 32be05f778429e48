"""Deterministic random generator for simulation replays.

xoshiro256** state seeded through SplitMix64, so one 64-bit seed always
expands to the same stream regardless of platform. Gaussian draws consume
exactly two uniforms (Box-Muller, no spare caching) and exponential draws
exactly one, keeping the draw count per event fixed.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256:
    """xoshiro256** generator with distribution helpers."""

    def __init__(self, seed: int):
        self.state = [0, 0, 0, 0]
        sm = seed & _MASK64
        for i in range(4):
            sm, self.state[i] = _splitmix64(sm)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.state
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.state = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Normal draw via Box-Muller; always consumes two uniforms."""
        u1 = 1.0 - self.random()  # (0, 1], keeps log() finite
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        return mu + sigma * r * math.cos(2.0 * math.pi * u2)

    def expovariate(self, mean: float) -> float:
        """Exponential draw with the given mean; consumes one uniform."""
        return -mean * math.log(1.0 - self.random())
