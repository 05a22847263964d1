"""Unit types and their combat statistics."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class Team(IntEnum):
    ALLY = 0
    ENEMY = 1

    @property
    def other(self) -> "Team":
        return Team.ENEMY if self is Team.ALLY else Team.ALLY

    @property
    def label(self) -> str:
        return "ally" if self is Team.ALLY else "enemy"


@dataclass(frozen=True)
class UnitType:
    name: str
    speed: float         # meters per tick
    max_health: int
    damage: int
    attack_range: float  # meters
    glyph: str           # square | circle | triangle
    sight_range: float = 15.0
    cooldown: int = 1    # ticks between attacks


SPEARMAN = UnitType("spearman", speed=1.0, max_health=24, damage=1, attack_range=1.0, glyph="square")
ARCHER = UnitType("archer", speed=2.0, max_health=2, damage=3, attack_range=15.0, glyph="circle")
CAVALRY = UnitType("cavalry", speed=6.0, max_health=12, damage=1, attack_range=1.0, glyph="triangle")

# Index order is the wire format for type codes everywhere (arrays, replays, frames).
UNIT_TYPES: tuple[UnitType, ...] = (SPEARMAN, ARCHER, CAVALRY)
TYPE_INDEX = {t.name: i for i, t in enumerate(UNIT_TYPES)}

# Plural/singular forms accepted in behavior-tree text and plans.
TYPE_TOKEN_ALIASES = {
    "spearman": "spearman",
    "spearmen": "spearman",
    "archer": "archer",
    "archers": "archer",
    "cavalry": "cavalry",
}

# Unit names the grammar accepts but no shipped scenario fields.  They parse,
# are flagged by validation, and match no unit at runtime.
PHANTOM_TYPE_TOKENS = frozenset({"balista", "dragon", "civilian"})


def type_by_name(name: str) -> UnitType:
    return UNIT_TYPES[TYPE_INDEX[name]]


def stat_arrays():
    """Per-type stat vectors indexed by type code (module-level import cycle guard)."""
    import numpy as np

    return {
        "speed": np.array([t.speed for t in UNIT_TYPES]),
        "max_health": np.array([t.max_health for t in UNIT_TYPES], dtype=np.int32),
        "damage": np.array([t.damage for t in UNIT_TYPES], dtype=np.int32),
        "attack_range": np.array([t.attack_range for t in UNIT_TYPES]),
        "sight_range": np.array([t.sight_range for t in UNIT_TYPES]),
        "cooldown": np.array([t.cooldown for t in UNIT_TYPES], dtype=np.int16),
    }
