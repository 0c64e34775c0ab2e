"""Deterministic random numbers and parameter initialisation.

The generator is xorshift64* (Vigna 2016): a 64-bit state ``s`` is updated
as ``s ^= s >> 12; s ^= s << 25; s ^= s >> 27`` (all mod 2**64) and the
output word is ``s * 0x2545F4914F6CDD1D``.  Uniform doubles in [0, 1) take
the top 53 bits of the output word divided by 2**53.  Seeds are passed
through one round of splitmix64 so that seed 0 is valid and nearby seeds
give unrelated streams.

The algorithm is spelled out here so a port in another language can
replicate the streams; within this implementation identical seeds always
produce bit-identical sequences regardless of the kernel backend.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .errors import ContractError

_U64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    """One splitmix64 step; used for seeding and stream derivation."""
    x = (x + 0x9E3779B97F4A7C15) & _U64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _U64
    return x ^ (x >> 31)


class XorShift64Star:
    """xorshift64* stream with array fills routed through the kernel backend."""

    def __init__(self, seed: int):
        self._state = splitmix64(int(seed) & _U64)
        if self._state == 0:
            self._state = 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        s = self._state
        s ^= s >> 12
        s = (s ^ (s << 25)) & _U64
        s ^= s >> 27
        self._state = s
        return (s * 0x2545F4914F6CDD1D) & _U64

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0):
        """Uniform draw(s) in [low, high); scalar when shape is None."""
        if shape is None:
            u = (self.next_u64() >> 11) * 2.0**-53
            return low + (high - low) * u
        out = np.empty(int(np.prod(shape)), dtype=np.float64)
        self._state = int(kernels.xorshift_fill(self._state, out))
        if high != 1.0 or low != 0.0:
            out = low + (high - low) * out
        return out.reshape(shape)

    def normal(self, shape) -> np.ndarray:
        """Standard normal draws via Box-Muller on consecutive uniform pairs."""
        n = int(np.prod(shape))
        pairs = (n + 1) // 2
        u = self.uniform((2 * pairs,))
        u1 = np.maximum(u[0::2], 2.0**-53)  # guard log(0)
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * math.pi * u2)
        z[1::2] = r * np.sin(2.0 * math.pi * u2)
        return z[:n].reshape(shape)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) via 128-bit multiply-shift."""
        return (self.next_u64() * n) >> 64

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def derive(self, key: int) -> "XorShift64Star":
        """Independent child stream; deterministic in (current state, key)."""
        child = XorShift64Star.__new__(XorShift64Star)
        child._state = splitmix64(self._state ^ splitmix64(key)) or 1
        return child


INIT_SCHEMES = ("uniform_fan", "zeros", "ones")


def seeded_init(shape, seed: int, scheme: str = "uniform_fan") -> np.ndarray:
    """Deterministic parameter initialisation.

    ``uniform_fan`` draws from U(-b, b) with b = sqrt(6 / (fan_in + fan_out)),
    where the fans are the first two dimensions (or size twice for vectors).
    """
    shape = tuple(int(s) for s in shape)
    if scheme == "zeros":
        return np.zeros(shape, dtype=np.float64)
    if scheme == "ones":
        return np.ones(shape, dtype=np.float64)
    if scheme == "uniform_fan":
        if len(shape) >= 2:
            fan_in, fan_out = shape[0], shape[1]
        else:
            fan_in = fan_out = shape[0] if shape else 1
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return XorShift64Star(seed).uniform(shape, -bound, bound)
    raise ContractError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
