"""Shared numeric semantics for both tree evaluators.

The per-unit interpreter (interpreter.py) and the roster-wide array
evaluator (vector.py) must agree bit-for-bit; every constant or mapping
they share lives here.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .. import rng
from ..units import TYPE_INDEX, TYPE_TOKEN_ALIASES

log = logging.getLogger(__name__)

# in_reach horizon: how many ticks of closing speed count as "reachable".
TIME_STEPS = {"now": 0, "low": 1, "middle": 2, "high": 3}

# is_dying: health strictly below this fraction of max health.
DYING_FRACTION = {"low": 0.75, "middle": 0.50, "high": 0.25}

# follow_map heading jitter, uniform in ±10 degrees.
NOISE_RAD = math.radians(10.0)

SALT_BT = rng.salt_of("bt-node")

_warned_flock = False


def node_salt(uid: int) -> int:
    return (SALT_BT + uid) & 0xFFFFFFFF


def unit_lane(team_idx: int, unit_id: int):
    """Distinct rng lane per unit across both teams."""
    return (np.asarray(unit_id, dtype=np.uint64) << np.uint64(1)) | np.uint64(team_idx)


def stop_distance(intensity: str | None, speed: float, sight_range: float) -> float:
    """follow_map gives way to closer-range behaviors inside this distance."""
    if intensity == "low":
        return 0.5 * sight_range
    if intensity == "middle":
        return 0.25 * sight_range
    return speed  # high and unspecified


def filter_type_codes(unit_filter: tuple[str, ...]) -> frozenset[int]:
    """Type indices matched by a grammar unit filter; phantoms match nothing."""
    if unit_filter == ("any",):
        return frozenset(TYPE_INDEX.values())
    codes = set()
    for token in unit_filter:
        name = TYPE_TOKEN_ALIASES.get(token)
        if name is not None:
            codes.add(TYPE_INDEX[name])
    return frozenset(codes)


def warn_flock_once() -> None:
    global _warned_flock
    if not _warned_flock:
        _warned_flock = True
        log.warning("is_flock has no defined behavior; it always evaluates to Failure")


def rotate(dx: float, dy: float, theta: float) -> tuple[float, float]:
    c, s = math.cos(theta), math.sin(theta)
    return (c * dx - s * dy, s * dx + c * dy)
