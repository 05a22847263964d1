"""Per-unit tree interpreter over a single Observation.

This is the readable reference for tree semantics; the simulation runs
the array evaluator in vector.py, which is tested to agree with this one
draw-for-draw.  Trees are memoryless: each tick re-evaluates from the
root, there is no Running state.

The emitted engine action is the one attempted by the first *succeeding*
action node along the evaluated path — even when an enclosing sequence
fails afterwards.  Evaluation that emits nothing means Noop.
"""

from __future__ import annotations

import math

from ..engine import Action as EngineAction
from ..engine import Attack, Move, Noop, Observation, VisibleUnit
from ..rng import TickRng
from ..terrain import NEIGHBOR_OFFSETS, next_step_direction
from ..units import TYPE_INDEX, TYPE_TOKEN_ALIASES
from . import nodes as N
from .semantics import (
    DYING_FRACTION,
    NOISE_RAD,
    TIME_STEPS,
    filter_type_codes,
    node_salt,
    rotate,
    stop_distance,
    unit_lane,
    warn_flock_once,
)

SUCCESS = True
FAILURE = False


def eval_bt(tree: N.BTNode, obs: Observation, rng: TickRng) -> tuple[bool, EngineAction | None]:
    """Evaluate one tick.  Returns (status, action or None)."""
    ev = _Eval(obs, rng)
    status = ev.node(tree)
    return status, ev.emitted


class _Eval:
    def __init__(self, obs: Observation, rng: TickRng):
        self.obs = obs
        self.rng = rng
        self.emitted: EngineAction | None = None
        self.lane = int(unit_lane(int(obs.self.team), obs.self.id))

    # -- composites ---------------------------------------------------------

    def node(self, n: N.BTNode) -> bool:
        if isinstance(n, N.Sequence):
            return all(self.node(c) for c in n.children)  # stops at first failure
        if isinstance(n, N.Fallback):
            return any(self.node(c) for c in n.children)  # stops at first success
        if isinstance(n, N.Condition):
            return self.atomic(n.atomic, emit=False)
        status = self.atomic(n.atomic, emit=True)
        return status

    # -- leaves ---------------------------------------------------------------

    def _emit(self, action: EngineAction) -> None:
        if self.emitted is None:
            self.emitted = action

    def _uniform(self, atom: N.Atomic) -> float:
        return self.rng.uniform_scalar(node_salt(atom.uid), self.lane)

    def _candidates(self, side: str, unit_filter: tuple[str, ...]) -> list[VisibleUnit]:
        team = self.obs.self.team.other if side == "foe" else self.obs.self.team
        codes = filter_type_codes(unit_filter)
        return [
            v for v in self.obs.visible
            if v.team == team and TYPE_INDEX[v.type.name] in codes
        ]

    def _dist(self, v: VisibleUnit) -> float:
        sx, sy = self.obs.self.pos
        return math.hypot(v.pos[0] - sx, v.pos[1] - sy)

    def _select(self, qualifier: str, cands: list[VisibleUnit], atom: N.Atomic) -> VisibleUnit:
        if qualifier == "strongest":
            return min(cands, key=lambda v: (-v.health, v.id))
        if qualifier == "weakest":
            return min(cands, key=lambda v: (v.health, v.id))
        if qualifier == "closest":
            return min(cands, key=lambda v: (self._dist(v), v.id))
        if qualifier == "farthest":
            return min(cands, key=lambda v: (-self._dist(v), v.id))
        # random: the floor(u*n)-th candidate in (distance, id) order — uniform
        # over the set, and the same enumeration the array evaluator uses
        by_dist = sorted(cands, key=lambda v: (self._dist(v), v.id))
        u = self._uniform(atom)
        return by_dist[min(int(u * len(by_dist)), len(by_dist) - 1)]

    def atomic(self, atom: N.Atomic, emit: bool) -> bool:
        me = self.obs.self
        if isinstance(atom, N.Stand):
            if emit:
                self._emit(Noop())
            return SUCCESS
        if isinstance(atom, N.SuccessAction):
            return SUCCESS
        if isinstance(atom, N.FailureAction):
            return FAILURE
        if isinstance(atom, N.IsInForest):
            return self.obs.in_forest
        if isinstance(atom, N.IsType):
            matches = TYPE_TOKEN_ALIASES.get(atom.unit) == me.type.name
            return (not matches) if atom.negation == "not_a" else matches
        if isinstance(atom, N.IsArmed):
            if atom.subject == "self":
                return me.cooldown_left == 0
            # Cooldowns of other units are not observable; any visible match
            # counts as armed (documented approximation; unused by the library).
            return bool(self._candidates(atom.subject, N.ANY_FILTER))
        if isinstance(atom, N.IsDying):
            frac = DYING_FRACTION[atom.intensity]
            if atom.subject == "self":
                return me.health < frac * me.type.max_health
            return any(
                v.health < frac * v.type.max_health
                for v in self._candidates(atom.subject, N.ANY_FILTER)
            )
        if isinstance(atom, N.IsFlock):
            warn_flock_once()
            return FAILURE
        if isinstance(atom, N.InSight):
            return bool(self._candidates(atom.side, atom.unit_filter))
        if isinstance(atom, N.InReach):
            cands = self._candidates(atom.side, atom.unit_filter)
            t = TIME_STEPS[atom.time]
            if atom.source == "them_from_me":
                thr = me.type.attack_range + t * me.type.speed
                return any(self._dist(v) <= thr for v in cands)
            return any(
                self._dist(v) <= v.type.attack_range + t * v.type.speed for v in cands
            )
        if isinstance(atom, N.AttackAtom):
            if me.cooldown_left != 0:
                return FAILURE
            cands = [
                v for v in self._candidates("foe", atom.unit_filter)
                if self._dist(v) <= me.type.attack_range
            ]
            if not cands:
                return FAILURE
            chosen = self._select(atom.qualifier, cands, atom)
            if emit:
                self._emit(Attack(chosen.team, chosen.id))
            return SUCCESS
        if isinstance(atom, N.MoveRel):
            cands = self._candidates(atom.side, atom.unit_filter)
            if not cands:
                return FAILURE
            ref = self._select(atom.qualifier, cands, atom)
            dx = ref.pos[0] - me.pos[0]
            dy = ref.pos[1] - me.pos[1]
            d = math.hypot(dx, dy)
            if atom.sense == "toward":
                length = min(me.type.speed, d)
            else:
                length = -me.type.speed  # directly away, full speed
            if d > 1e-12:
                move = Move(dx / d * length, dy / d * length)
            else:
                move = Move(0.0, 0.0)
            if emit:
                self._emit(move)
            return SUCCESS
        if isinstance(atom, N.MoveDir):
            vec = {
                "north": (0.0, 1.0),
                "east": (1.0, 0.0),
                "south": (0.0, -1.0),
                "west": (-1.0, 0.0),
            }.get(atom.direction)
            if vec is None:  # center
                world = self.obs.world
                cx, cy = world.width / 2.0, world.height / 2.0
                dx, dy = cx - me.pos[0], cy - me.pos[1]
                d = math.hypot(dx, dy)
                vec = (dx / d, dy / d) if d > 1e-12 else (0.0, 0.0)
            if emit:
                self._emit(Move(vec[0] * me.type.speed, vec[1] * me.type.speed))
            return SUCCESS
        if isinstance(atom, N.FollowMap):
            field = self.obs.distance_field
            if field is None:
                return FAILURE
            here = field.value_at(*me.pos)
            if not math.isfinite(here):
                return FAILURE
            if atom.sense == "toward":
                stop = stop_distance(atom.intensity, me.type.speed, me.type.sight_range)
                if here <= stop:
                    return FAILURE
                step = next_step_direction(field, me.pos)
                if step is None:
                    return FAILURE
                theta = (self._uniform(atom) * 2.0 - 1.0) * NOISE_RAD
                dx, dy = rotate(step[0], step[1], theta)
                length = min(me.type.speed, here)
                if emit:
                    self._emit(Move(dx * length, dy * length))
                return SUCCESS
            # away_from: climb the field along the steepest finite ascent
            step = _ascent_direction(field, me.pos)
            if step is None:
                return FAILURE
            theta = (self._uniform(atom) * 2.0 - 1.0) * NOISE_RAD
            dx, dy = rotate(step[0], step[1], theta)
            if emit:
                self._emit(Move(dx * me.type.speed, dy * me.type.speed))
            return SUCCESS
        raise TypeError(f"unknown atomic {atom!r}")


def _ascent_direction(field, pos) -> tuple[float, float] | None:
    """Direction of the neighbor cell with the largest finite distance."""
    world = field.world
    ix, iy = world.cell_of(*pos)
    here = field.dist[ix, iy]
    if not math.isfinite(here):
        return None
    best = here
    best_dir = None
    for (dx, dy) in NEIGHBOR_OFFSETS:
        jx, jy = ix + int(dx), iy + int(dy)
        if not (0 <= jx < world.width and 0 <= jy < world.height):
            continue
        if dx != 0 and dy != 0 and not (world.passable[jx, iy] and world.passable[ix, jy]):
            continue
        d = field.dist[jx, jy]
        if math.isfinite(d) and d > best:
            best = d
            best_dir = (float(dx), float(dy))
    if best_dir is None:
        return None
    n = math.hypot(*best_dir)
    return (best_dir[0] / n, best_dir[1] / n)
