"""Deterministic random streams: splitmix64 seeding, xoshiro256++, Box-Muller.

The 64-bit stream is pinned bit-for-bit so that every sampled matrix is
reproducible across platforms and across the numba/pure-Python code paths.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def splitmix64_next(x: int) -> tuple[int, int]:
    """Advance a splitmix64 state. Returns (new_state, output)."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return x, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def _fill_u64_py(state: list[int], out: np.ndarray) -> None:
    """Reference xoshiro256++ block fill on Python ints."""
    s0, s1, s2, s3 = state
    for i in range(out.shape[0]):
        out[i] = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _fill_u64_numba(state: np.ndarray, out: np.ndarray) -> None:  # pragma: no cover
        k23 = np.uint64(23)
        k41 = np.uint64(41)
        k17 = np.uint64(17)
        k45 = np.uint64(45)
        k19 = np.uint64(19)
        s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
        for i in range(out.shape[0]):
            x = s0 + s3
            out[i] = ((x << k23) | (x >> k41)) + s0
            t = s1 << k17
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = (s3 << k45) | (s3 >> k19)
        state[0] = s0
        state[1] = s1
        state[2] = s2
        state[3] = s3


class RngStream:
    """xoshiro256++ stream seeded by splitmix64 expansion of a 64-bit seed."""

    def __init__(self, seed: int, use_numba: bool | None = None):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        sm = seed & _MASK64
        state = []
        for _ in range(4):
            sm, word = splitmix64_next(sm)
            state.append(word)
        if not any(state):  # xoshiro requires a nonzero state
            state[0] = 1
        self._state = state
        self._use_numba = _HAVE_NUMBA if use_numba is None else (use_numba and _HAVE_NUMBA)

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._state)

    def next_u64(self) -> int:
        out = np.empty(1, dtype=np.uint64)
        _fill_u64_py(self._state, out)
        return int(out[0])

    def u64_block(self, count: int) -> np.ndarray:
        out = np.empty(count, dtype=np.uint64)
        if count == 0:
            return out
        if self._use_numba:
            packed = np.array(self._state, dtype=np.uint64)
            _fill_u64_numba(packed, out)
            self._state = [int(w) for w in packed]
        else:
            _fill_u64_py(self._state, out)
        return out

    def uniforms(self, count: int) -> np.ndarray:
        """i.i.d. uniforms on [0, 1) as (x >> 11) * 2**-53."""
        return (self.u64_block(count) >> np.uint64(11)) * 2.0**-53

    def gaussians(self, count: int, std: float = 1.0) -> np.ndarray:
        """i.i.d. N(0, std^2) via Box-Muller; two uniforms per sample pair."""
        pairs = (count + 1) // 2
        u = self.uniforms(2 * pairs)
        u1 = np.maximum(u[0::2], 2.0**-53)  # ln(0) guard, keeps entries finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        if std != 1.0:
            z *= std
        return z[:count]

    def fork(self) -> "RngStream":
        """Child stream seeded by a value drawn from this stream."""
        return RngStream(self.next_u64(), use_numba=self._use_numba)
