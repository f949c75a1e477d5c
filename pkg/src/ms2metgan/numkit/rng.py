"""SplitMix64 pseudo-random stream.

A single u64 state advanced by a fixed odd constant, finalized with the
standard SplitMix64 mixer. Scalar and vectorized draws advance the state
identically, so a run's randomness depends only on the seed and the draw
order, never on platform or array layout.
"""
from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_U53_SCALE = 2.0**-53


def _mix_scalar(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def _mix_array(z: np.ndarray) -> np.ndarray:
    # uint64 array ops wrap mod 2**64 without warning, matching _mix_scalar
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


class Prng:
    """Deterministic random source used for init, dropout, and sampling."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix_scalar(self._state)

    def _next_array(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        states = np.uint64(self._state) + steps
        if n:
            self._state = int(states[-1])
        return _mix_array(states)

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0):
        """Uniform draws in [low, high) with 53-bit resolution."""
        n = math.prod(shape) if shape else 1
        bits = self._next_array(n)
        u = (bits >> np.uint64(11)).astype(np.float64) * _U53_SCALE
        vals = low + (high - low) * u
        return vals.reshape(shape) if shape else float(vals[0])

    def randint(self, n: int) -> int:
        # modulo bias is irrelevant here; determinism is what matters
        return self.next_u64() % n
