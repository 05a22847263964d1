"""Shared helpers: hand-built worlds and game states with exact unit placement."""

from __future__ import annotations

import numpy as np
import pytest

from phalanx.engine import GameState, TeamState
from phalanx.terrain import MapFeature, Rect, TerrainKind, WorldMap
from phalanx.units import TYPE_INDEX, Team


def make_team(units: list[tuple[str, float, float]], health: list[int] | None = None) -> TeamState:
    """TeamState with units of given (type_name, x, y), full health unless given."""
    n = len(units)
    if n == 0:
        return TeamState.empty()
    type_idx = np.array([TYPE_INDEX[t] for t, _, _ in units], dtype=np.int8)
    ts = TeamState(
        pos=np.array([[x, y] for _, x, y in units], dtype=np.float64),
        health=np.zeros(n, dtype=np.int32),
        alive=np.ones(n, dtype=bool),
        type_idx=type_idx,
        cooldown=np.zeros(n, dtype=np.int16),
    )
    ts.health[:] = ts.max_health if health is None else np.asarray(health, dtype=np.int32)
    ts.alive[:] = ts.health > 0
    return ts


def make_state(
    world: WorldMap,
    allies: list[tuple[str, float, float]],
    enemies: list[tuple[str, float, float]],
    seed: int = 7,
    tick: int = 0,
    ally_health: list[int] | None = None,
    enemy_health: list[int] | None = None,
) -> GameState:
    return GameState(
        map=world,
        seed=seed,
        tick=tick,
        teams={
            Team.ALLY: make_team(allies, ally_health),
            Team.ENEMY: make_team(enemies, enemy_health),
        },
    )


@pytest.fixture
def flat_world() -> WorldMap:
    """60 x 60 open ground, no features."""
    return WorldMap(60, 60)


@pytest.fixture
def walled_world() -> WorldMap:
    """40 x 30 split by a water wall at x in [18, 20], with a gap at y in (12, 16)."""
    return WorldMap(
        40,
        30,
        features=[
            MapFeature("North Channel", TerrainKind.WATER, (Rect(18, 16, 20, 30),)),
            MapFeature("South Channel", TerrainKind.WATER, (Rect(18, 0, 20, 12),)),
        ],
    )
