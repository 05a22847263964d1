"""Deterministic per-tick game loop over array-of-struct team rosters.

Tick order (all decisions are made from the frozen pre-step state):
  a. attacks apply damage simultaneously; deaths resolve after the whole
     phase, so mutual kills happen; attackers start their cooldown
  b. moves, clipped at the last passable point along the segment
  c. overlapping live units (< 1 m apart) pushed apart symmetrically,
     up to 4 relaxation iterations
  d. units pushed onto impassable ground revert to their pre-push spot
  e. cooldowns count down, tick increments

Positions are float64 (x, y) meters; health is integer points.  Every
random draw is keyed by (seed, tick, site, unit), so trajectories are a
pure function of (map, rosters, seed, actions).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import rng
from .terrain import Rect, WorldMap
from .units import Team, UnitType, UNIT_TYPES, TYPE_INDEX, stat_arrays

CONTACT_DISTANCE = 1.0       # centers closer than this push apart
PUSH_ITERATIONS = 4
MIN_SPAWN_SEPARATION = 0.8
MOVE_CLIP_RESOLUTION = 0.125  # sampling step for clipping moves at walls
_EDGE_EPS = 1e-6

_SALT_PUSH = rng.salt_of("push-direction")
_SALT_SPAWN_ORDER = rng.salt_of("spawn-order")
_SALT_SPAWN_JITTER_X = rng.salt_of("spawn-jitter-x")
_SALT_SPAWN_JITTER_Y = rng.salt_of("spawn-jitter-y")

STATS = stat_arrays()


class SpawnError(ValueError):
    pass


@dataclass
class TeamState:
    """One team's roster as parallel arrays indexed by dense unit id."""

    pos: np.ndarray        # (N, 2) float64
    health: np.ndarray     # (N,) int32
    alive: np.ndarray      # (N,) bool
    type_idx: np.ndarray   # (N,) int8 — index into UNIT_TYPES
    cooldown: np.ndarray   # (N,) int16 ticks until the unit may attack again

    @classmethod
    def empty(cls) -> "TeamState":
        return cls(
            pos=np.zeros((0, 2)),
            health=np.zeros(0, dtype=np.int32),
            alive=np.zeros(0, dtype=bool),
            type_idx=np.zeros(0, dtype=np.int8),
            cooldown=np.zeros(0, dtype=np.int16),
        )

    def __len__(self) -> int:
        return len(self.health)

    def copy(self) -> "TeamState":
        return TeamState(
            self.pos.copy(), self.health.copy(), self.alive.copy(),
            self.type_idx.copy(), self.cooldown.copy(),
        )

    @property
    def speed(self) -> np.ndarray:
        return STATS["speed"][self.type_idx]

    @property
    def damage(self) -> np.ndarray:
        return STATS["damage"][self.type_idx]

    @property
    def attack_range(self) -> np.ndarray:
        return STATS["attack_range"][self.type_idx]

    @property
    def sight_range(self) -> np.ndarray:
        return STATS["sight_range"][self.type_idx]

    @property
    def max_health(self) -> np.ndarray:
        return STATS["max_health"][self.type_idx]


@dataclass
class GameState:
    map: WorldMap
    seed: int
    tick: int
    teams: dict[Team, TeamState]

    def copy(self) -> "GameState":
        return GameState(self.map, self.seed, self.tick, {t: s.copy() for t, s in self.teams.items()})

    def live_count(self, team: Team) -> int:
        return int(self.teams[team].alive.sum())


# -- actions -----------------------------------------------------------------

KIND_NOOP, KIND_MOVE, KIND_ATTACK = 0, 1, 2


@dataclass(frozen=True)
class Noop:
    pass


@dataclass(frozen=True)
class Move:
    dx: float
    dy: float


@dataclass(frozen=True)
class Attack:
    target_team: Team
    target_id: int


Action = Noop | Move | Attack


@dataclass
class TeamActions:
    """Per-unit actions for one team, in array form."""

    kind: np.ndarray         # (N,) uint8
    move: np.ndarray         # (N, 2) float64
    target_team: np.ndarray  # (N,) int8
    target_id: np.ndarray    # (N,) int64

    @classmethod
    def noop(cls, n: int) -> "TeamActions":
        return cls(
            kind=np.zeros(n, dtype=np.uint8),
            move=np.zeros((n, 2)),
            target_team=np.zeros(n, dtype=np.int8),
            target_id=np.full(n, -1, dtype=np.int64),
        )

    @classmethod
    def from_list(cls, actions: Sequence[Action]) -> "TeamActions":
        out = cls.noop(len(actions))
        for i, a in enumerate(actions):
            if isinstance(a, Move):
                out.kind[i] = KIND_MOVE
                out.move[i] = (a.dx, a.dy)
            elif isinstance(a, Attack):
                out.kind[i] = KIND_ATTACK
                out.target_team[i] = int(a.target_team)
                out.target_id[i] = a.target_id
        return out


# -- observation (reference path; the vector evaluator reads arrays directly) --


@dataclass(frozen=True)
class VisibleUnit:
    id: int
    team: Team
    type: UnitType
    pos: tuple[float, float]
    health: int


@dataclass(frozen=True)
class SelfSnapshot:
    id: int
    team: Team
    type: UnitType
    pos: tuple[float, float]
    health: int
    cooldown_left: int


@dataclass
class Observation:
    self: SelfSnapshot
    visible: list[VisibleUnit]
    in_forest: bool
    world: WorldMap | None = None
    target_position: tuple[float, float] | None = None
    distance_field: object | None = None


def in_forest_mask(state: GameState, team: Team) -> np.ndarray:
    ts = state.teams[team]
    ix, iy = state.map.cells_of(ts.pos)
    return state.map.forest[ix, iy]


def observe(state: GameState, unit_id: int, team: Team) -> Observation:
    ts = state.teams[team]
    if not (0 <= unit_id < len(ts)) or not ts.alive[unit_id]:
        raise ValueError(f"observe: unit {team.label}/{unit_id} is dead or unknown")
    utype = UNIT_TYPES[ts.type_idx[unit_id]]
    me = SelfSnapshot(
        id=unit_id,
        team=team,
        type=utype,
        pos=(float(ts.pos[unit_id, 0]), float(ts.pos[unit_id, 1])),
        health=int(ts.health[unit_id]),
        cooldown_left=int(ts.cooldown[unit_id]),
    )
    cell = state.map.cell_of(*me.pos)
    in_forest = bool(state.map.forest[cell])
    visible: list[VisibleUnit] = []
    if not in_forest:
        for other_team in (Team.ALLY, Team.ENEMY):
            os_ = state.teams[other_team]
            hidden = in_forest_mask(state, other_team)
            for oid in range(len(os_)):
                if not os_.alive[oid] or hidden[oid]:
                    continue
                if other_team is team and oid == unit_id:
                    continue
                opos = (float(os_.pos[oid, 0]), float(os_.pos[oid, 1]))
                d = np.hypot(opos[0] - me.pos[0], opos[1] - me.pos[1])
                if d > utype.sight_range:
                    continue
                if not state.map.line_of_sight(me.pos, opos):
                    continue
                visible.append(
                    VisibleUnit(oid, other_team, UNIT_TYPES[os_.type_idx[oid]], opos, int(os_.health[oid]))
                )
    return Observation(self=me, visible=visible, in_forest=in_forest, world=state.map)


# -- spawning ----------------------------------------------------------------


@dataclass(frozen=True)
class RosterGroup:
    type_name: str
    count: int
    region: Rect


def spawn_roster(
    world: WorldMap, groups: Iterable[RosterGroup], seed: int, team: Team
) -> TeamState:
    """Deterministic jittered-grid placement, ids dense in declaration order.

    Within one group no two units start closer than MIN_SPAWN_SEPARATION;
    callers keep group regions disjoint for the guarantee to span a team.
    """
    pos_parts: list[np.ndarray] = []
    type_parts: list[np.ndarray] = []
    health_parts: list[np.ndarray] = []
    for gi, g in enumerate(groups):
        if g.count <= 0:
            raise SpawnError(f"group {gi}: count must be positive")
        utype = UNIT_TYPES[TYPE_INDEX[g.type_name]]
        placed = None
        for pitch in (1.0, 0.95, 0.9, 0.86, 0.82):
            nx = int((g.region.x2 - g.region.x1) / pitch)
            ny = int((g.region.y2 - g.region.y1) / pitch)
            if nx <= 0 or ny <= 0:
                continue
            gx, gy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
            cand = np.stack(
                [
                    g.region.x1 + (gx.ravel() + 0.5) * pitch,
                    g.region.y1 + (gy.ravel() + 0.5) * pitch,
                ],
                axis=1,
            )
            cand = cand[world.passable_at(cand)]
            if len(cand) < g.count:
                continue
            lane = np.arange(len(cand)) + (gi << 24) + (int(team) << 23)
            order = np.argsort(rng.hash_u64(seed, 0, _SALT_SPAWN_ORDER, lane), kind="stable")
            chosen = cand[order[: g.count]]
            amp = min(0.08, (pitch - MIN_SPAWN_SEPARATION) / 2.01)
            jl = lane[order[: g.count]]
            jx = (rng.uniform(seed, 0, _SALT_SPAWN_JITTER_X, jl) * 2 - 1) * amp
            jy = (rng.uniform(seed, 0, _SALT_SPAWN_JITTER_Y, jl) * 2 - 1) * amp
            placed = chosen + np.stack([jx, jy], axis=1)
            break
        if placed is None:
            raise SpawnError(
                f"group {gi} ({g.type_name} x{g.count}): region too small or too blocked"
            )
        pos_parts.append(placed)
        type_parts.append(np.full(g.count, TYPE_INDEX[g.type_name], dtype=np.int8))
        health_parts.append(np.full(g.count, utype.max_health, dtype=np.int32))
    n = sum(len(p) for p in pos_parts)
    return TeamState(
        pos=np.concatenate(pos_parts) if n else np.zeros((0, 2)),
        health=np.concatenate(health_parts) if n else np.zeros(0, dtype=np.int32),
        alive=np.ones(n, dtype=bool),
        type_idx=np.concatenate(type_parts) if n else np.zeros(0, dtype=np.int8),
        cooldown=np.zeros(n, dtype=np.int16),
    )


# -- the step ----------------------------------------------------------------


def _clip_moves(world: WorldMap, start: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Endpoint per mover: clipped to the last passable sample along the segment."""
    if len(start) == 0:
        return start
    lengths = np.linalg.norm(delta, axis=1)
    max_len = float(lengths.max(initial=0.0))
    n_samples = max(int(np.ceil(max_len / MOVE_CLIP_RESOLUTION)), 1) + 1
    ts = np.linspace(0.0, 1.0, n_samples)
    pts = start[:, None, :] + delta[:, None, :] * ts[None, :, None]
    flat = pts.reshape(-1, 2)
    ok = world.passable_at(flat).reshape(len(start), n_samples)
    # First blocked sample per row; everything from it on is unreachable.
    blocked = ~ok
    first_bad = np.where(blocked.any(axis=1), blocked.argmax(axis=1), n_samples)
    last_good = np.maximum(first_bad - 1, 0)
    return pts[np.arange(len(start)), last_good]


def step_game(state: GameState, actions: Mapping[Team, TeamActions]) -> GameState:
    nxt = state.copy()
    world = state.map

    # (a) simultaneous attacks from pre-step state
    damage_acc = {t: np.zeros(len(state.teams[t]), dtype=np.int64) for t in state.teams}
    attacked = {}
    for team, ts in state.teams.items():
        acts = actions[team]
        is_attack = (acts.kind == KIND_ATTACK) & ts.alive & (ts.cooldown == 0)
        for tgt_team in (Team.ALLY, Team.ENEMY):
            sel = is_attack & (acts.target_team == int(tgt_team))
            if not sel.any():
                continue
            tids = acts.target_id[sel]
            tstate = state.teams[tgt_team]
            if len(tstate) == 0:
                valid = np.zeros(len(tids), dtype=bool)
            else:
                valid = (tids >= 0) & (tids < len(tstate)) & tstate.alive[np.clip(tids, 0, len(tstate) - 1)]
            # stale intent (dead/unknown target) degrades to Noop
            sel_idx = np.flatnonzero(sel)[valid]
            np.add.at(damage_acc[tgt_team], tids[valid], state.teams[team].damage[sel_idx].astype(np.int64))
            is_attack[np.flatnonzero(sel)[~valid]] = False
        attacked[team] = is_attack
    for team, ts in nxt.teams.items():
        ts.health -= damage_acc[team].astype(np.int32)
        ts.alive &= ts.health > 0
        cd = STATS["cooldown"][ts.type_idx]
        ts.cooldown[attacked[team]] = cd[attacked[team]]

    # (b) moves (attackers in phase a do not also move; one action per unit)
    for team, ts in nxt.teams.items():
        acts = actions[team]
        movers = (acts.kind == KIND_MOVE) & ts.alive
        if not movers.any():
            continue
        delta = acts.move[movers]
        speed = ts.speed[movers]
        norm = np.linalg.norm(delta, axis=1)
        over = norm > speed
        scale = np.ones(len(delta))
        scale[over] = speed[over] / norm[over]
        delta = delta * scale[:, None]
        ts.pos[movers] = _clip_moves(world, ts.pos[movers], delta)

    # (c) push apart overlapping live units, both teams together
    a, b = nxt.teams[Team.ALLY], nxt.teams[Team.ENEMY]
    live_idx = [np.flatnonzero(a.alive), np.flatnonzero(b.alive)]
    n_a = len(live_idx[0])
    pre_push = {Team.ALLY: a.pos.copy(), Team.ENEMY: b.pos.copy()}
    if n_a + len(live_idx[1]) >= 2:
        pts = np.concatenate([a.pos[live_idx[0]], b.pos[live_idx[1]]])
        for _ in range(PUSH_ITERATIONS):
            pairs = cKDTree(pts).query_pairs(CONTACT_DISTANCE, output_type="ndarray")
            if len(pairs) == 0:
                break
            pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
            diff = pts[pairs[:, 0]] - pts[pairs[:, 1]]
            dist = np.linalg.norm(diff, axis=1)
            strict = dist < CONTACT_DISTANCE
            pairs, diff, dist = pairs[strict], diff[strict], dist[strict]
            if len(pairs) == 0:
                break
            # coincident centers get a hashed direction so the pair separates
            degen = dist < 1e-9
            if degen.any():
                ang = rng.uniform(state.seed, state.tick, _SALT_PUSH, pairs[degen, 0] * (1 << 20) + pairs[degen, 1]) * 2 * np.pi
                diff[degen] = np.stack([np.cos(ang), np.sin(ang)], axis=1)
                dist[degen] = 1.0
            push = diff / dist[:, None] * ((CONTACT_DISTANCE - np.where(degen, 0.0, dist)) * 0.5)[:, None]
            acc = np.zeros_like(pts)
            np.add.at(acc, pairs[:, 0], push)
            np.add.at(acc, pairs[:, 1], -push)
            pts = pts + acc
        pts[:, 0] = np.clip(pts[:, 0], _EDGE_EPS, world.width - _EDGE_EPS)
        pts[:, 1] = np.clip(pts[:, 1], _EDGE_EPS, world.height - _EDGE_EPS)
        a.pos[live_idx[0]] = pts[:n_a]
        b.pos[live_idx[1]] = pts[n_a:]

    # (d) pushed onto impassable ground -> back to the pre-push position
    for team, ts in nxt.teams.items():
        bad = ts.alive & ~world.passable_at(ts.pos)
        if bad.any():
            ts.pos[bad] = pre_push[team][bad]

    # (e) cooldowns tick down; next tick begins
    for ts in nxt.teams.values():
        np.maximum(ts.cooldown - 1, 0, out=ts.cooldown)
    nxt.tick += 1
    return nxt


def state_hash(state: GameState) -> str:
    """Order-stable digest of (tick, positions, healths, alive, cooldowns)."""
    h = hashlib.sha256()
    h.update(np.int64(state.tick).tobytes())
    for team in (Team.ALLY, Team.ENEMY):
        ts = state.teams[team]
        h.update(np.ascontiguousarray(ts.pos).tobytes())
        h.update(np.ascontiguousarray(ts.health).tobytes())
        h.update(np.ascontiguousarray(ts.alive).tobytes())
        h.update(np.ascontiguousarray(ts.cooldown).tobytes())
    return h.hexdigest()
