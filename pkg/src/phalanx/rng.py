"""Counter-based deterministic random numbers.

Every random draw in the simulation is a pure function of
``(seed, tick, salt, lane)``.  There is no hidden stream state, so the
vectorised engine and the single-unit reference interpreter produce
bit-identical draws no matter in which order units are evaluated.

The mixer is the splitmix64 finalizer, computed with numpy uint64
arithmetic (wrap-around on overflow is the intended behaviour).
"""

from __future__ import annotations

import zlib

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SH1 = np.uint64(30)
_SH2 = np.uint64(27)
_SH3 = np.uint64(31)
# 2**-64 as float; uniforms live in [0, 1).
_INV64 = float(np.ldexp(1.0, -64))


def salt_of(label: str) -> int:
    """Stable integer salt for a named draw site.  NEVER Python's ``hash()``."""
    return zlib.crc32(label.encode("utf-8"))


def _mix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # uint64 wraparound is the point
        x = (x + _GAMMA) * _MIX1
        x ^= x >> _SH1
        x *= _MIX2
        x ^= x >> _SH2
        x *= _MIX1
        x ^= x >> _SH3
    return x


def hash_u64(seed: int, tick: int, salt: int, lane) -> np.ndarray:
    """uint64 hash per lane.  ``lane`` is an int or integer array."""
    lanes = np.asarray(lane, dtype=np.uint64)
    x = _mix(lanes)
    x = _mix(x ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    # tick and salt each get their own 32-bit half so draw sites never collide.
    x = _mix(x ^ np.uint64(((tick & 0xFFFFFFFF) << 32) | (salt & 0xFFFFFFFF)))
    return x


def uniform(seed: int, tick: int, salt: int, lane) -> np.ndarray:
    """Uniform floats in [0, 1), one per lane."""
    bits = hash_u64(seed, tick, salt, lane)
    return bits.astype(np.float64) * _INV64


class TickRng:
    """Draw source bound to one (seed, tick).

    ``salt`` identifies the draw site (e.g. a tree node id), ``lane`` the
    consumer (e.g. a unit id).  Repeated calls with the same arguments
    return the same values by construction.
    """

    def __init__(self, seed: int, tick: int):
        self.seed = int(seed)
        self.tick = int(tick)

    def uniform(self, salt: int, lane) -> np.ndarray:
        return uniform(self.seed, self.tick, salt, lane)

    def uniform_scalar(self, salt: int, lane: int) -> float:
        return float(uniform(self.seed, self.tick, salt, np.uint64(lane)))
