"""Hand-computed battles and invariants for the lockstep unit engine."""

from __future__ import annotations

import numpy as np
import pytest

from phalanx.engine import (
    Attack,
    CONTACT_DISTANCE,
    GameState,
    Move,
    Noop,
    RosterGroup,
    SpawnError,
    TeamActions,
    in_forest_mask,
    observe,
    spawn_roster,
    state_hash,
    step_game,
)
from phalanx.terrain import Circle, MapFeature, Rect, TerrainKind, WorldMap
from phalanx.units import Team

from conftest import make_state


def both_noop(state: GameState) -> dict:
    return {t: TeamActions.noop(len(ts)) for t, ts in state.teams.items()}


def mutual_attack(state: GameState) -> dict:
    return {
        Team.ALLY: TeamActions.from_list([Attack(Team.ENEMY, 0)]),
        Team.ENEMY: TeamActions.from_list([Attack(Team.ALLY, 0)]),
    }


# -- attacks ------------------------------------------------------------------


def test_spearman_duel_is_mutual_kill_after_24_ticks(flat_world):
    """1 damage per tick into 24 health: both fall exactly on step 24."""
    state = make_state(flat_world, [("spearman", 10, 10)], [("spearman", 10.8, 10)])
    for tick in range(23):
        state = step_game(state, mutual_attack(state))
        assert state.teams[Team.ALLY].alive[0] and state.teams[Team.ENEMY].alive[0]
        assert state.teams[Team.ALLY].health[0] == 24 - (tick + 1)
    state = step_game(state, mutual_attack(state))
    assert not state.teams[Team.ALLY].alive[0]
    assert not state.teams[Team.ENEMY].alive[0]
    assert state.tick == 24


def test_archer_one_shots_archer(flat_world):
    """3 damage versus 2 health: dead in a single exchange."""
    state = make_state(flat_world, [("archer", 5, 5)], [("archer", 12, 5)])
    state = step_game(
        state,
        {
            Team.ALLY: TeamActions.from_list([Attack(Team.ENEMY, 0)]),
            Team.ENEMY: TeamActions.noop(1),
        },
    )
    assert not state.teams[Team.ENEMY].alive[0]
    assert state.teams[Team.ENEMY].health[0] == -1


def test_attacks_resolve_simultaneously_from_pre_state(flat_world):
    """Two units at 1 health kill each other; neither strike pre-empts the other."""
    state = make_state(
        flat_world,
        [("spearman", 10, 10)],
        [("spearman", 11, 10)],
        ally_health=[1],
        enemy_health=[1],
    )
    state = step_game(state, mutual_attack(state))
    assert not state.teams[Team.ALLY].alive[0]
    assert not state.teams[Team.ENEMY].alive[0]


def test_attack_on_dead_target_degrades_to_noop(flat_world):
    state = make_state(
        flat_world,
        [("spearman", 10, 10)],
        [("spearman", 11, 10), ("spearman", 12, 10)],
        enemy_health=[0, 24],
    )
    before = state.teams[Team.ENEMY].health.copy()
    state = step_game(
        state,
        {
            Team.ALLY: TeamActions.from_list([Attack(Team.ENEMY, 0)]),
            Team.ENEMY: TeamActions.noop(2),
        },
    )
    assert np.array_equal(state.teams[Team.ENEMY].health, before)
    # The stale swing costs nothing: cooldown was not spent.
    assert state.teams[Team.ALLY].cooldown[0] == 0


def test_attack_gated_by_cooldown(flat_world):
    state = make_state(flat_world, [("spearman", 10, 10)], [("spearman", 11, 10)])
    state.teams[Team.ALLY].cooldown[0] = 3
    acts = {
        Team.ALLY: TeamActions.from_list([Attack(Team.ENEMY, 0)]),
        Team.ENEMY: TeamActions.noop(1),
    }
    # Cooldown 3 -> 2 -> 1 -> 0: the first three swings whiff, the fourth lands.
    for expected in (24, 24, 24, 23):
        state = step_game(state, acts)
        assert state.teams[Team.ENEMY].health[0] == expected


def test_dead_units_do_not_act_or_take_damage(flat_world):
    state = make_state(
        flat_world,
        [("spearman", 10, 10)],
        [("spearman", 11, 10)],
        ally_health=[0],
    )
    state = step_game(state, mutual_attack(state))
    assert state.teams[Team.ENEMY].health[0] == 24  # the dead ally never swung
    assert not state.teams[Team.ALLY].alive[0]


def test_health_never_increases_and_alive_tracks_health(flat_world):
    state = make_state(
        flat_world,
        [("spearman", 10, 10), ("archer", 8, 10)],
        [("spearman", 11, 10), ("cavalry", 10, 11)],
    )
    for _ in range(30):
        prev = {t: ts.health.copy() for t, ts in state.teams.items()}
        acts = {
            Team.ALLY: TeamActions.from_list([Attack(Team.ENEMY, 0), Attack(Team.ENEMY, 1)]),
            Team.ENEMY: TeamActions.from_list([Attack(Team.ALLY, 0), Attack(Team.ALLY, 0)]),
        }
        state = step_game(state, acts)
        for t, ts in state.teams.items():
            assert (ts.health <= prev[t]).all()
            assert np.array_equal(ts.alive, ts.health > 0)


# -- movement ------------------------------------------------------------------


def test_move_clipped_to_unit_speed(flat_world):
    state = make_state(flat_world, [("spearman", 10, 10), ("cavalry", 30, 30)], [])
    acts = {
        Team.ALLY: TeamActions.from_list([Move(100.0, 0.0), Move(0.0, -100.0)]),
        Team.ENEMY: TeamActions.noop(0),
    }
    state = step_game(state, acts)
    assert np.allclose(state.teams[Team.ALLY].pos[0], [11.0, 10.0])  # speed 1
    assert np.allclose(state.teams[Team.ALLY].pos[1], [30.0, 24.0])  # speed 6


def test_short_moves_pass_through_unchanged(flat_world):
    state = make_state(flat_world, [("cavalry", 30, 30)], [])
    acts = {
        Team.ALLY: TeamActions.from_list([Move(1.5, -2.0)]),
        Team.ENEMY: TeamActions.noop(0),
    }
    state = step_game(state, acts)
    assert np.allclose(state.teams[Team.ALLY].pos[0], [31.5, 28.0])


def test_move_into_wall_stops_at_the_bank(walled_world):
    state = make_state(walled_world, [("cavalry", 15.5, 5.5)], [])
    acts = {
        Team.ALLY: TeamActions.from_list([Move(6.0, 0.0)]),
        Team.ENEMY: TeamActions.noop(0),
    }
    state = step_game(state, acts)
    x, y = state.teams[Team.ALLY].pos[0]
    assert y == 5.5
    assert 17.0 <= x < 18.0  # advanced to the water's edge, never inside
    assert state.map.passable_at(state.teams[Team.ALLY].pos)[0]


def test_move_through_gap_is_not_blocked(walled_world):
    state = make_state(walled_world, [("cavalry", 15.5, 14.0)], [])
    acts = {
        Team.ALLY: TeamActions.from_list([Move(6.0, 0.0)]),
        Team.ENEMY: TeamActions.noop(0),
    }
    state = step_game(state, acts)
    assert np.allclose(state.teams[Team.ALLY].pos[0], [21.5, 14.0])


def test_attacker_does_not_also_move(flat_world):
    state = make_state(flat_world, [("spearman", 10, 10)], [("spearman", 11, 10)])
    start = state.teams[Team.ALLY].pos[0].copy()
    state = step_game(
        state,
        {
            Team.ALLY: TeamActions.from_list([Attack(Team.ENEMY, 0)]),
            Team.ENEMY: TeamActions.noop(1),
        },
    )
    assert np.allclose(state.teams[Team.ALLY].pos[0], start)


# -- crowd pushing ----------------------------------------------------------------


def test_overlapping_units_push_apart(flat_world):
    state = make_state(flat_world, [("spearman", 20, 20)], [("spearman", 20.2, 20)])
    d0 = 0.2
    state = step_game(state, both_noop(state))
    a = state.teams[Team.ALLY].pos[0]
    b = state.teams[Team.ENEMY].pos[0]
    d1 = float(np.hypot(*(a - b)))
    assert d1 > d0
    assert d1 <= CONTACT_DISTANCE + 1e-9


def test_coincident_units_separate(flat_world):
    state = make_state(flat_world, [("spearman", 20, 20)], [("spearman", 20, 20)])
    state = step_game(state, both_noop(state))
    a = state.teams[Team.ALLY].pos[0]
    b = state.teams[Team.ENEMY].pos[0]
    assert float(np.hypot(*(a - b))) > 0.1


def test_push_is_deterministic(flat_world):
    mk = lambda: make_state(
        flat_world,
        [("spearman", 20, 20), ("spearman", 20.3, 20.1)],
        [("spearman", 20.1, 20.2)],
        seed=99,
    )
    s1 = step_game(mk(), both_noop(mk()))
    s2 = step_game(mk(), both_noop(mk()))
    assert state_hash(s1) == state_hash(s2)


def test_push_never_shoves_into_water(walled_world):
    # A row of units pressed against the channel wall: pushes revert rather
    # than land anyone in the water.
    allies = [("spearman", 17.4, 5.5), ("spearman", 17.4, 5.6), ("spearman", 17.4, 5.4)]
    state = make_state(walled_world, allies, [])
    for _ in range(3):
        state = step_game(state, both_noop(state))
        assert state.map.passable_at(state.teams[Team.ALLY].pos).all()


def test_push_keeps_units_in_bounds(flat_world):
    state = make_state(flat_world, [("spearman", 0.1, 0.1)], [("spearman", 0.1, 0.1)])
    state = step_game(state, both_noop(state))
    for ts in state.teams.values():
        assert (ts.pos >= 0).all()
        assert (ts.pos[:, 0] <= 60).all() and (ts.pos[:, 1] <= 60).all()


# -- observation ----------------------------------------------------------------


def test_sight_radius_is_fifteen(flat_world):
    state = make_state(
        flat_world,
        [("spearman", 10, 10)],
        [("spearman", 24.9, 10), ("spearman", 25.2, 10)],
    )
    obs = observe(state, 0, Team.ALLY)
    seen = {(v.team, v.id) for v in obs.visible}
    assert (Team.ENEMY, 0) in seen      # 14.9 m away
    assert (Team.ENEMY, 1) not in seen  # 15.2 m away
    assert obs.self.pos == (10.0, 10.0)
    assert obs.self.type.name == "spearman"


def test_forest_hides_occupants_both_ways():
    world = WorldMap(40, 40, features=[MapFeature("Grove", TerrainKind.FOREST, (Circle(20, 20, 3),))])
    state = make_state(world, [("spearman", 20, 20)], [("spearman", 26, 20)])
    hider = observe(state, 0, Team.ALLY)
    assert hider.in_forest
    assert hider.visible == []  # sees nothing from inside
    watcher = observe(state, 0, Team.ENEMY)
    assert not watcher.in_forest
    assert watcher.visible == []  # and cannot be seen either
    assert in_forest_mask(state, Team.ALLY).tolist() == [True]
    assert in_forest_mask(state, Team.ENEMY).tolist() == [False]


def test_observe_skips_dead_and_self(flat_world):
    state = make_state(
        flat_world,
        [("spearman", 10, 10), ("archer", 12, 10)],
        [("spearman", 14, 10)],
        enemy_health=[0],
    )
    obs = observe(state, 0, Team.ALLY)
    assert [(v.team, v.id) for v in obs.visible] == [(Team.ALLY, 1)]
    with pytest.raises(ValueError):
        observe(state, 0, Team.ENEMY)  # dead
    with pytest.raises(ValueError):
        observe(state, 5, Team.ALLY)  # unknown


# -- spawning -------------------------------------------------------------------


def test_spawn_roster_is_deterministic(flat_world):
    groups = [
        RosterGroup("spearman", 30, Rect(5, 5, 25, 25)),
        RosterGroup("archer", 10, Rect(30, 30, 50, 50)),
    ]
    a = spawn_roster(flat_world, groups, seed=4, team=Team.ALLY)
    b = spawn_roster(flat_world, groups, seed=4, team=Team.ALLY)
    c = spawn_roster(flat_world, groups, seed=5, team=Team.ALLY)
    assert np.array_equal(a.pos, b.pos)
    assert not np.array_equal(a.pos, c.pos)
    # Ids are dense in declaration order: 30 spearmen then 10 archers.
    assert a.type_idx[:30].tolist() == [0] * 30
    assert a.type_idx[30:].tolist() == [1] * 10
    assert (a.health[:30] == 24).all() and (a.health[30:] == 2).all()


def test_spawn_respects_region_and_separation(flat_world):
    region = Rect(10, 10, 20, 20)
    ts = spawn_roster(flat_world, [RosterGroup("cavalry", 60, region)], seed=1, team=Team.ENEMY)
    assert (ts.pos[:, 0] >= 10).all() and (ts.pos[:, 0] <= 20).all()
    assert (ts.pos[:, 1] >= 10).all() and (ts.pos[:, 1] <= 20).all()
    d = np.linalg.norm(ts.pos[:, None, :] - ts.pos[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    assert d.min() >= 0.8
    assert flat_world.passable_at(ts.pos).all()


def test_spawn_differs_by_team_and_overflows_loudly(flat_world):
    groups = [RosterGroup("spearman", 12, Rect(5, 5, 15, 15))]
    ally = spawn_roster(flat_world, groups, seed=4, team=Team.ALLY)
    enemy = spawn_roster(flat_world, groups, seed=4, team=Team.ENEMY)
    assert not np.array_equal(ally.pos, enemy.pos)
    with pytest.raises(SpawnError):
        spawn_roster(flat_world, [RosterGroup("spearman", 500, Rect(5, 5, 10, 10))], 1, Team.ALLY)
    with pytest.raises(SpawnError):
        spawn_roster(flat_world, [RosterGroup("spearman", 0, Rect(5, 5, 10, 10))], 1, Team.ALLY)


# -- hashing --------------------------------------------------------------------


def test_state_hash_reflects_every_field(flat_world):
    base = make_state(flat_world, [("spearman", 10, 10)], [("archer", 20, 20)])
    h = state_hash(base)
    assert h == state_hash(base.copy())
    moved = base.copy()
    moved.teams[Team.ALLY].pos[0, 0] += 1e-9
    assert state_hash(moved) != h
    hurt = base.copy()
    hurt.teams[Team.ENEMY].health[0] -= 1
    assert state_hash(hurt) != h
    cooled = base.copy()
    cooled.teams[Team.ALLY].cooldown[0] = 1
    assert state_hash(cooled) != h
    ticked = base.copy()
    ticked.tick += 1
    assert state_hash(ticked) != h


def test_step_returns_new_state(flat_world):
    state = make_state(flat_world, [("spearman", 10, 10)], [("spearman", 11, 10)])
    frozen = state_hash(state)
    nxt = step_game(state, mutual_attack(state))
    assert nxt is not state
    assert state_hash(state) == frozen  # input untouched
    assert nxt.tick == state.tick + 1
