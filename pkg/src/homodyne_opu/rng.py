"""Counter-based keyed random numbers.

Every draw is a pure function of ``(seed, *keys)``: there is no generator
state, so a value keyed by ``(seed, stream, channel, pass, symbol)`` is the
same whether it is produced alone, inside a large batch, or on another thread.
numpy's bit generators are sequential per instance, which makes per-element
keying over large index grids impractical; the mixer below is the SplitMix64
finalizer applied as a hash.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def _mix(z):
    z = z ^ (z >> _S30)
    z = z * _M1
    z = z ^ (z >> _S27)
    z = z * _M2
    return z ^ (z >> _S31)


def _as_u64(k):
    if isinstance(k, (int, np.integer)):
        return np.uint64(int(k) & _MASK64)
    return np.asarray(k, dtype=np.int64).view(np.uint64)


def key_hash(seed: int, *keys) -> np.ndarray:
    """64-bit hash of ``seed`` and broadcast integer ``keys``."""
    with np.errstate(over="ignore"):
        h = _mix(_as_u64(seed) + _GOLDEN)
        for k in keys:
            h = _mix(h ^ _mix(_as_u64(k) + _GOLDEN))
    return h


def _to_unit(h):
    return ((h >> _S11).astype(np.float64) + 0.5) * 2.0**-53


def uniform(seed: int, *keys) -> np.ndarray:
    """Keyed uniforms on the open interval (0, 1)."""
    return _to_unit(key_hash(seed, *keys))


with np.errstate(over="ignore"):
    _LANES = [_mix(np.uint64(lane) + _GOLDEN) for lane in (0, 1)]


def normal(seed: int, *keys) -> np.ndarray:
    """Keyed standard normals (Box-Muller over two independent lanes).

    Equal to combining ``uniform(seed, *keys, 0)`` and ``uniform(seed, *keys, 1)``;
    the shared key prefix is hashed once.
    """
    prefix = key_hash(seed, *keys)
    with np.errstate(over="ignore"):
        u1 = _to_unit(_mix(prefix ^ _LANES[0]))
        u2 = _to_unit(_mix(prefix ^ _LANES[1]))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
