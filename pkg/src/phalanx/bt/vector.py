"""Roster-wide tree evaluation with numpy/KD-tree batching.

Semantically this mirrors interpreter.eval_bt unit-for-unit: the same
(seed, tick, node, unit) random draws, the same candidate orderings, the
same emission rule.  The only documented divergence is the enumeration
of exact distance ties (the KD-tree's order vs. the interpreter's
(distance, id) order); spawn jitter makes real ties measure-zero.

Strategy per tick:
  * per (team, type-filter) KD-trees over live, non-forest units — units
    hidden in trees are simply absent from every candidate set
  * nearest/choice queries per observer batch; per-pair line-of-sight
    resolved first by a summed-area-table bounding-box test (true for
    almost every pair on open ground), exact grid traversal only for
    the leftovers
  * `random` picks the floor(u·count)-th candidate in distance order —
    uniform over the candidate set without materializing it; observers
    whose sight disc may touch opaque cells take the exact gather path
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .. import rng as rngmod
from ..engine import (
    KIND_ATTACK,
    KIND_MOVE,
    KIND_NOOP,
    STATS,
    GameState,
    TeamActions,
    in_forest_mask,
)
from ..terrain import ascent_directions, next_step_directions
from ..units import TYPE_INDEX, TYPE_TOKEN_ALIASES, Team
from . import nodes as N
from .semantics import (
    DYING_FRACTION,
    NOISE_RAD,
    TIME_STEPS,
    filter_type_codes,
    node_salt,
    stop_distance,
    unit_lane,
    warn_flock_once,
)

_RANK_BUCKETS = (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096)


class Perception:
    """Frozen pre-step view of both teams with cached KD-trees."""

    def __init__(self, state: GameState):
        self.state = state
        self.world = state.map
        self.team = {}
        for team in (Team.ALLY, Team.ENEMY):
            ts = state.teams[team]
            forest = in_forest_mask(state, team)
            self.team[team] = {
                "pos": ts.pos,
                "alive": ts.alive,
                "forest": forest,
                "cand": ts.alive & ~forest,
                "type": ts.type_idx,
                "health": ts.health,
                "cooldown": ts.cooldown,
            }
        self._trees: dict = {}

    def cand_tree(self, team: Team, codes: frozenset, dying_frac: float | None = None):
        """(cKDTree or None, global ids) for live visible units of given types."""
        key = (int(team), codes, dying_frac)
        hit = self._trees.get(key)
        if hit is None:
            t = self.team[team]
            mask = t["cand"] & np.isin(t["type"], sorted(codes))
            if dying_frac is not None:
                thr = dying_frac * STATS["max_health"][t["type"]]
                mask = mask & (t["health"] < thr)
            gids = np.flatnonzero(mask)
            tree = cKDTree(t["pos"][gids]) if len(gids) else None
            hit = (tree, gids)
            self._trees[key] = hit
        return hit

    # -- line of sight -----------------------------------------------------

    def discs_clear(self, pos: np.ndarray, radius: float) -> np.ndarray:
        """True where no opaque cell can appear in any segment from pos within radius."""
        w = self.world
        x0 = np.clip((pos[:, 0] - radius).astype(np.int64), 0, w.width - 1)
        x1 = np.clip((pos[:, 0] + radius).astype(np.int64), 0, w.width - 1)
        y0 = np.clip((pos[:, 1] - radius).astype(np.int64), 0, w.height - 1)
        y1 = np.clip((pos[:, 1] + radius).astype(np.int64), 0, w.height - 1)
        return w.opaque_in_bbox(x0, y0, x1, y1) == 0

    def los_pairs(self, pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
        """Per-pair line of sight; exact traversal only where the bbox test fails."""
        w = self.world
        ax = pa[:, 0].astype(np.int64)
        ay = pa[:, 1].astype(np.int64)
        bx = pb[:, 0].astype(np.int64)
        by = pb[:, 1].astype(np.int64)
        x0 = np.minimum(ax, bx)
        x1 = np.maximum(ax, bx)
        y0 = np.minimum(ay, by)
        y1 = np.maximum(ay, by)
        ok = w.opaque_in_bbox(x0, y0, x1, y1) == 0
        dirty = np.flatnonzero(~ok)
        for i in dirty:
            ok[i] = w.line_of_sight((pa[i, 0], pa[i, 1]), (pb[i, 0], pb[i, 1]))
        return ok


@dataclass
class _Chosen:
    found: np.ndarray  # bool per observer row
    gid: np.ndarray    # chosen candidate id (valid where found)
    dist: np.ndarray   # distance to chosen (valid where found)


class _VecEval:
    """Evaluates one tree for one batch of same-team units sharing a field."""

    def __init__(self, perception: Perception, team: Team, idx: np.ndarray, dist_field):
        self.p = perception
        self.world = perception.world
        self.team = team
        self.foe = team.other
        self.idx = idx
        self.field = dist_field
        self.n = len(idx)
        t = perception.team[team]
        self.pos = t["pos"][idx]
        self.my_forest = t["forest"][idx]
        self.my_alive = t["alive"][idx]
        self.my_type = t["type"][idx]
        self.my_speed = STATS["speed"][self.my_type]
        self.my_range = STATS["attack_range"][self.my_type]
        self.my_sight = STATS["sight_range"][self.my_type]
        self.my_cooldown = t["cooldown"][idx]
        self.lanes = unit_lane(int(team), idx)
        self.seed = perception.state.seed
        self.tick = perception.state.tick
        # outputs
        self.emitted = np.zeros(self.n, dtype=bool)
        self.out_kind = np.zeros(self.n, dtype=np.uint8)
        self.out_move = np.zeros((self.n, 2))
        self.out_tt = np.zeros(self.n, dtype=np.int8)
        self.out_tid = np.full(self.n, -1, dtype=np.int64)

    # -- plumbing ------------------------------------------------------------

    def _uniform(self, atom: N.Atomic, rows: np.ndarray | None = None) -> np.ndarray:
        lanes = self.lanes if rows is None else self.lanes[rows]
        return rngmod.uniform(self.seed, self.tick, node_salt(atom.uid), lanes)

    def _by_type(self):
        for code in np.unique(self.my_type):
            yield int(code), np.flatnonzero(self.my_type == code)

    def side_team(self, side: str) -> Team:
        return self.foe if side == "foe" else self.team

    # -- candidate selection ---------------------------------------------------

    def _gather_sorted(self, rows: np.ndarray, side: str, codes: frozenset, cap: float,
                       dying_frac: float | None = None):
        """All LOS-visible candidates within cap for each row, sorted by (row, dist, gid).

        Returns (row_idx, cand_gid, dist) flat arrays.  Exact but ragged;
        used for rare paths and as the fallback near opaque terrain.
        """
        side_t = self.side_team(side)
        tree, gids = self.p.cand_tree(side_t, codes, dying_frac)
        if tree is None or len(rows) == 0:
            e = np.zeros(0, dtype=np.int64)
            return e, e, np.zeros(0)
        obs_pos = self.pos[rows]
        obs_tree = cKDTree(obs_pos)
        pairs = obs_tree.sparse_distance_matrix(tree, cap, output_type="ndarray")
        if len(pairs) == 0:
            e = np.zeros(0, dtype=np.int64)
            return e, e, np.zeros(0)
        ri = pairs["i"].astype(np.int64)
        cj = pairs["j"].astype(np.int64)
        dv = pairs["v"]
        cand_gid = gids[cj]
        if side_t == self.team:  # a unit is never its own candidate
            keep = cand_gid != self.idx[rows][ri]
            ri, cand_gid, dv = ri[keep], cand_gid[keep], dv[keep]
        vis = self.p.los_pairs(obs_pos[ri], self.p.team[side_t]["pos"][cand_gid])
        ri, cand_gid, dv = ri[vis], cand_gid[vis], dv[vis]
        order = np.lexsort((cand_gid, dv, ri))
        return rows[ri[order]], cand_gid[order], dv[order]

    def _rank_pick(self, row_idx, cand_gid, dist, ranks: np.ndarray) -> _Chosen:
        """Pick the ranks[row]-th entry of each row group (clamped to size-1).

        row_idx are local batch rows, sorted ascending; rows absent from
        row_idx are not found.
        """
        found = np.zeros(self.n, dtype=bool)
        gid = np.full(self.n, -1, dtype=np.int64)
        dst = np.full(self.n, np.inf)
        if len(row_idx) == 0:
            return _Chosen(found, gid, dst)
        uniq, start, counts = np.unique(row_idx, return_index=True, return_counts=True)
        r = np.minimum(ranks[uniq], counts - 1)
        take = start + r
        found[uniq] = True
        gid[uniq] = cand_gid[take]
        dst[uniq] = dist[take]
        return _Chosen(found, gid, dst)

    def _nearest(self, rows: np.ndarray, side: str, codes: frozenset, cap: float,
                 dying_frac: float | None = None) -> _Chosen:
        """Nearest LOS-visible candidate within cap, ties by the KD-tree's order."""
        found = np.zeros(self.n, dtype=bool)
        gid = np.full(self.n, -1, dtype=np.int64)
        dst = np.full(self.n, np.inf)
        side_t = self.side_team(side)
        if side_t == self.team:
            # friend-side queries must skip self; take the exact path
            ri, cg, dv = self._gather_sorted(rows, side, codes, cap, dying_frac)
            return self._rank_pick(ri, cg, dv, np.zeros(self.n, dtype=np.int64))
        tree, gids = self.p.cand_tree(side_t, codes, dying_frac)
        if tree is None or len(rows) == 0:
            return _Chosen(found, gid, dst)
        obs_pos = self.pos[rows]
        d, j = tree.query(obs_pos, k=1, distance_upper_bound=cap)
        hit = np.isfinite(d)
        hrows = rows[hit]
        if len(hrows):
            cand_pos = tree.data[j[hit]]
            vis = self.p.los_pairs(obs_pos[hit], cand_pos)
            ok_rows = hrows[vis]
            found[ok_rows] = True
            gid[ok_rows] = gids[j[hit][vis]]
            dst[ok_rows] = d[hit][vis]
            # nearest was in range but sight-blocked: scan the whole disc
            retry = hrows[~vis]
            if len(retry):
                ri, cg, dv = self._gather_sorted(retry, side, codes, cap, dying_frac)
                sub = self._rank_pick_local(ri, cg, dv)
                for rloc, g, dd in sub:
                    found[rloc] = True
                    gid[rloc] = g
                    dst[rloc] = dd
        return _Chosen(found, gid, dst)

    def _rank_pick_local(self, row_idx, cand_gid, dist):
        if len(row_idx) == 0:
            return []
        uniq, start = np.unique(row_idx, return_index=True)
        return [(int(u), int(cand_gid[s]), float(dist[s])) for u, s in zip(uniq, start)]

    def _choose(self, rows: np.ndarray, side: str, codes: frozenset, cap: float,
                qualifier: str, atom: N.Atomic) -> _Chosen:
        """Qualifier selection among LOS-visible candidates within cap."""
        if qualifier == "closest":
            return self._nearest(rows, side, codes, cap)
        if qualifier == "random":
            return self._choose_random(rows, side, codes, cap, atom)
        # strongest / weakest / farthest: exact gather, re-keyed
        ri, cg, dv = self._gather_sorted(rows, side, codes, cap)
        if len(ri):
            t = self.p.team[self.side_team(side)]
            if qualifier == "strongest":
                order = np.lexsort((cg, -t["health"][cg].astype(np.int64), ri))
            elif qualifier == "weakest":
                order = np.lexsort((cg, t["health"][cg].astype(np.int64), ri))
            else:  # farthest
                order = np.lexsort((cg, -dv, ri))
            ri, cg, dv = ri[order], cg[order], dv[order]
        return self._rank_pick(ri, cg, dv, np.zeros(self.n, dtype=np.int64))

    def _choose_random(self, rows: np.ndarray, side: str, codes: frozenset, cap: float,
                       atom: N.Atomic) -> _Chosen:
        found = np.zeros(self.n, dtype=bool)
        gid = np.full(self.n, -1, dtype=np.int64)
        dst = np.full(self.n, np.inf)
        side_t = self.side_team(side)
        tree, gids = self.p.cand_tree(side_t, codes)
        if tree is None or len(rows) == 0:
            return _Chosen(found, gid, dst)
        obs_pos = self.pos[rows]
        clear = self.p.discs_clear(obs_pos, cap) if side_t != self.team else np.zeros(len(rows), bool)
        u = self._uniform(atom, rows)
        # exact-but-slow path where opaque terrain (or self-exclusion) is in play
        dirty_rows = rows[~clear]
        if len(dirty_rows):
            ri, cg, dv = self._gather_sorted(dirty_rows, side, codes, cap)
            counts = np.zeros(self.n, dtype=np.int64)
            if len(ri):
                uq, cts = np.unique(ri, return_counts=True)
                counts[uq] = cts
            rank_all = np.zeros(self.n, dtype=np.int64)
            rank_all[rows] = np.floor(u * counts[rows]).astype(np.int64)
            ch = self._rank_pick(ri, cg, dv, rank_all)
            found |= ch.found
            gid = np.where(ch.found, ch.gid, gid)
            dst = np.where(ch.found, ch.dist, dst)
        # fast path: disc provably clear, so count + rank lookup is exact
        clean_rows = rows[clear]
        if len(clean_rows):
            cpos = self.pos[clean_rows]
            counts = tree.query_ball_point(cpos, cap, return_length=True)
            ranks = np.floor(u[clear] * counts).astype(np.int64)
            have = counts > 0
            prev = 0
            for k in _RANK_BUCKETS:
                kk = min(k, len(gids))
                sel = have & (ranks >= prev) & (ranks < kk)
                if sel.any():
                    # no distance bound here: rank < count already guarantees the
                    # rank-th neighbor lies within cap (ball count is inclusive)
                    d, j = tree.query(cpos[sel], k=kk)
                    if kk == 1:
                        d = d[:, None]
                        j = j[:, None]
                    rsel = ranks[sel]
                    jj = j[np.arange(len(rsel)), rsel]
                    dd = d[np.arange(len(rsel)), rsel]
                    rr = clean_rows[sel]
                    found[rr] = True
                    gid[rr] = gids[jj]
                    dst[rr] = dd
                prev = kk
                if kk == len(gids):
                    break
        return _Chosen(found, gid, dst)

    # -- composites ---------------------------------------------------------

    def node(self, n: N.BTNode, active: np.ndarray) -> np.ndarray:
        if isinstance(n, N.Sequence):
            cur = active
            for c in n.children:
                if not cur.any():
                    return cur
                cur = cur & self.node(c, cur)
            return cur
        if isinstance(n, N.Fallback):
            succeeded = np.zeros(self.n, dtype=bool)
            remaining = active
            for c in n.children:
                if not remaining.any():
                    break
                s = self.node(c, remaining)
                succeeded |= s & remaining
                remaining = remaining & ~s
            return succeeded
        if isinstance(n, N.Condition):
            return self.atomic(n.atomic, active, emit=False) & active
        s = self.atomic(n.atomic, active, emit=True) & active
        return s

    def _emit(self, mask: np.ndarray, kind: int, move=None, tt: Team | None = None, tid=None):
        newly = mask & ~self.emitted
        self.emitted |= newly
        self.out_kind[newly] = kind
        if move is not None:
            self.out_move[newly] = move[newly]
        if tid is not None:
            self.out_tt[newly] = int(tt)
            self.out_tid[newly] = tid[newly]

    # -- atomics -----------------------------------------------------------

    def atomic(self, atom: N.Atomic, active: np.ndarray, emit: bool) -> np.ndarray:
        rows = np.flatnonzero(active & ~self.my_forest)  # forest-blind observers fail perception
        if isinstance(atom, N.Stand):
            if emit:
                self._emit(active, KIND_NOOP)
            return np.ones(self.n, dtype=bool)
        if isinstance(atom, N.SuccessAction):
            return np.ones(self.n, dtype=bool)
        if isinstance(atom, N.FailureAction):
            return np.zeros(self.n, dtype=bool)
        if isinstance(atom, N.IsInForest):
            return self.my_forest.copy()
        if isinstance(atom, N.IsType):
            name = TYPE_TOKEN_ALIASES.get(atom.unit)
            matches = (
                self.my_type == TYPE_INDEX[name] if name is not None
                else np.zeros(self.n, dtype=bool)
            )
            return ~matches if atom.negation == "not_a" else matches
        if isinstance(atom, N.IsArmed):
            if atom.subject == "self":
                return self.my_cooldown == 0
            ch = self._exists(rows, atom.subject, filter_type_codes(N.ANY_FILTER))
            return ch
        if isinstance(atom, N.IsDying):
            frac = DYING_FRACTION[atom.intensity]
            if atom.subject == "self":
                return self.p.team[self.team]["health"][self.idx] < frac * STATS["max_health"][self.my_type]
            return self._exists(rows, atom.subject, filter_type_codes(N.ANY_FILTER), dying_frac=frac)
        if isinstance(atom, N.IsFlock):
            warn_flock_once()
            return np.zeros(self.n, dtype=bool)
        if isinstance(atom, N.InSight):
            return self._exists(rows, atom.side, filter_type_codes(atom.unit_filter))
        if isinstance(atom, N.InReach):
            codes = filter_type_codes(atom.unit_filter)
            t = TIME_STEPS[atom.time]
            out = np.zeros(self.n, dtype=bool)
            if atom.source == "them_from_me":
                for code, sub in self._by_type():
                    thr = STATS["attack_range"][code] + t * STATS["speed"][code]
                    cap = min(thr, STATS["sight_range"][code])
                    srows = sub[np.isin(sub, rows)]
                    ch = self._nearest(srows, atom.side, codes, cap)
                    out |= ch.found
            else:  # me_from_them: per candidate type, their reach
                for code in sorted(codes):
                    thr = STATS["attack_range"][code] + t * STATS["speed"][code]
                    for ocode, sub in self._by_type():
                        cap = min(thr, STATS["sight_range"][ocode])
                        srows = sub[np.isin(sub, rows)]
                        ch = self._nearest(srows, atom.side, frozenset({code}), cap)
                        out |= ch.found
            return out
        if isinstance(atom, N.AttackAtom):
            codes = filter_type_codes(atom.unit_filter)
            out = np.zeros(self.n, dtype=bool)
            tid = np.full(self.n, -1, dtype=np.int64)
            armed = self.my_cooldown == 0
            arows = rows[armed[rows]]
            for code, sub in self._by_type():
                srows = sub[np.isin(sub, arows)]
                if len(srows) == 0:
                    continue
                cap = float(STATS["attack_range"][code])
                ch = self._choose(srows, "foe", codes, cap, atom.qualifier, atom)
                out |= ch.found
                tid = np.where(ch.found, ch.gid, tid)
            if emit:
                self._emit(out & active, KIND_ATTACK, tt=self.foe, tid=tid)
            return out
        if isinstance(atom, N.MoveRel):
            codes = filter_type_codes(atom.unit_filter)
            cap = float(STATS["sight_range"].max())
            ch = self._choose(rows, atom.side, codes, cap, atom.qualifier, atom)
            move = np.zeros((self.n, 2))
            side_pos = self.p.team[self.side_team(atom.side)]["pos"]
            sel = ch.found
            if sel.any():
                ref = side_pos[ch.gid[sel]]
                diff = ref - self.pos[sel]
                d = np.linalg.norm(diff, axis=1)
                safe = np.where(d > 1e-12, d, 1.0)
                if atom.sense == "toward":
                    length = np.minimum(self.my_speed[sel], d)
                else:
                    length = -self.my_speed[sel]
                move[sel] = diff / safe[:, None] * np.where(d > 1e-12, length, 0.0)[:, None]
            if emit:
                self._emit(sel & active, KIND_MOVE, move=move)
            return sel
        if isinstance(atom, N.MoveDir):
            vecs = {
                "north": (0.0, 1.0),
                "east": (1.0, 0.0),
                "south": (0.0, -1.0),
                "west": (-1.0, 0.0),
            }
            move = np.zeros((self.n, 2))
            if atom.direction == "center":
                c = np.array([self.world.width / 2.0, self.world.height / 2.0])
                diff = c[None, :] - self.pos
                d = np.linalg.norm(diff, axis=1)
                safe = np.where(d > 1e-12, d, 1.0)
                move = diff / safe[:, None] * np.where(d > 1e-12, self.my_speed, 0.0)[:, None]
            else:
                vx, vy = vecs[atom.direction]
                move[:, 0] = vx * self.my_speed
                move[:, 1] = vy * self.my_speed
            if emit:
                self._emit(active, KIND_MOVE, move=move)
            return np.ones(self.n, dtype=bool)
        if isinstance(atom, N.FollowMap):
            if self.field is None:
                return np.zeros(self.n, dtype=bool)
            here = self.field.values_at(self.pos)
            finite = np.isfinite(here)
            if atom.sense == "toward":
                stop = stop_distance(atom.intensity, self.my_speed, self.my_sight)
                beyond = finite & (here > stop)
                dirs, valid = next_step_directions(self.field, self.pos)
                ok = beyond & valid
                length = np.where(ok, np.minimum(self.my_speed, here), 0.0)
            else:
                dirs, valid = ascent_directions(self.field, self.pos)
                ok = finite & valid
                length = np.where(ok, self.my_speed, 0.0)
            theta = (self._uniform(atom) * 2.0 - 1.0) * NOISE_RAD
            c, s = np.cos(theta), np.sin(theta)
            rx = c * dirs[:, 0] - s * dirs[:, 1]
            ry = s * dirs[:, 0] + c * dirs[:, 1]
            move = np.stack([rx, ry], axis=1) * length[:, None]
            if emit:
                self._emit(ok & active, KIND_MOVE, move=move)
            return ok
        raise TypeError(f"unknown atomic {atom!r}")

    def _exists(self, rows, side, codes, dying_frac=None) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        for code, sub in self._by_type():
            cap = float(STATS["sight_range"][code])
            srows = sub[np.isin(sub, rows)]
            ch = self._nearest(srows, side, codes, cap, dying_frac)
            out |= ch.found
        return out


def evaluate_groups(
    state: GameState,
    team: Team,
    groups,
    perception: Perception | None = None,
) -> TeamActions:
    """Evaluate assignment groups [(tree, field|None, idx array)] into actions."""
    p = perception if perception is not None else Perception(state)
    n = len(state.teams[team])
    acts = TeamActions.noop(n)
    for tree, dist_field, idx in groups:
        idx = np.asarray(idx, dtype=np.int64)
        live = idx[state.teams[team].alive[idx]]
        if len(live) == 0:
            continue
        ev = _VecEval(p, team, live, dist_field)
        ev.node(tree, np.ones(len(live), dtype=bool))
        acts.kind[live] = ev.out_kind
        acts.move[live] = ev.out_move
        acts.target_team[live] = ev.out_tt
        acts.target_id[live] = ev.out_tid
    return acts
