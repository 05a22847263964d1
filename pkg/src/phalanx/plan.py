"""Multi-step plan DSL: parsing, validation, activation, behavior assignment.

A plan is the text between ``BEGIN PLAN`` and ``END PLAN``: numbered steps,
each with prerequisite step ids, an objective (``position`` or ``elimination``),
and one or more unit groups that carry a target position and a named behavior
from the tree library.  Parsing is tolerant of surrounding prose; the block
itself must follow the step grammar exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .bt.library import library_tree
from .bt.nodes import ANY_FILTER, BTNode, UNIT_TOKENS, substitute_targets
from .terrain import DistanceField, WorldMap
from .units import TYPE_TOKEN_ALIASES, Team

# Behavior names accepted in plans, mapped onto tree-library entries.
BEHAVIOR_TREES = {
    "attack_in_close_range": "close_range_attack",
    "attack_and_move": "attack_and_move",
    "attack_in_long_range": "long_range_attack",
    "follow_map": "move_to_target",
    "stand": "stand",
}

# A position step completes when every live unit is this close to its target.
POSITION_RADIUS = 3.0

_BEGIN = "BEGIN PLAN"
_END = "END PLAN"


class PlanError(ValueError):
    """Base class for plan text problems."""


class NoPlanError(PlanError):
    """The text contains no BEGIN PLAN / END PLAN block."""


class InvalidPlanError(PlanError):
    """The plan block violates the step grammar."""

    def __init__(self, message: str, line: int | None = None):
        self.message = message
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


# -- domain types ---------------------------------------------------------------


@dataclass(frozen=True)
class UnitSelector:
    """A set of unit ids: everyone, or explicit ids and half-open a:b slices."""

    all_units: bool = False
    # Items are ints or (start, stop) pairs; None keeps a slice end open.
    items: tuple = ()

    def resolve(self, roster_size: int) -> np.ndarray:
        """Sorted unique ids, clipped to the roster."""
        if self.all_units:
            return np.arange(roster_size, dtype=np.int64)
        out: list[int] = []
        for item in self.items:
            if isinstance(item, int):
                if 0 <= item < roster_size:
                    out.append(item)
            else:
                a, b = item
                lo = max(a or 0, 0)
                hi = roster_size if b is None else min(b, roster_size)
                out.extend(range(lo, hi))
        return np.unique(np.asarray(out, dtype=np.int64))

    def describe(self) -> str:
        if self.all_units:
            return "all"
        parts = []
        for item in self.items:
            if isinstance(item, int):
                parts.append(str(item))
            else:
                a, b = item
                parts.append(f"{'' if a is None else a}:{'' if b is None else b}")
        return "[" + ", ".join(parts) + "]"


ALL_UNITS = UnitSelector(all_units=True)


class ObjectiveKind(Enum):
    POSITION = "position"
    ELIMINATION = "elimination"


@dataclass(frozen=True)
class Objective:
    kind: ObjectiveKind
    targets: UnitSelector | None = None  # enemy ids; elimination only

    def describe(self) -> str:
        if self.kind is ObjectiveKind.POSITION:
            return "position"
        return f"elimination {self.targets.describe()}"


@dataclass(frozen=True)
class PlanBehavior:
    name: str
    targets: tuple[str, ...] = ANY_FILTER

    def tree(self) -> BTNode:
        return behavior_tree(self.name, self.targets)

    def describe(self) -> str:
        return f"{self.name} {' '.join(self.targets)}"


@dataclass(frozen=True)
class Group:
    units: UnitSelector
    target_position: tuple[int, int] | None
    behavior: PlanBehavior


@dataclass(frozen=True)
class Step:
    id: int
    prerequisites: tuple[int, ...]
    objective: Objective
    groups: tuple[Group, ...]


@dataclass(frozen=True)
class Plan:
    steps: dict[int, Step]
    raw_text: str = field(compare=False)

    @property
    def step_ids(self) -> list[int]:
        return sorted(self.steps)


@lru_cache(maxsize=None)
def behavior_tree(name: str, targets: tuple[str, ...]) -> BTNode:
    """Library tree for a plan behavior, with its foe filters substituted."""
    return substitute_targets(library_tree(BEHAVIOR_TREES[name]), targets)


# -- parsing ----------------------------------------------------------------------

_STEP_RE = re.compile(r"^step\s+(-?\d+)\s*:?\s*$", re.IGNORECASE)
_PREREQ_RE = re.compile(r"^prerequisites\s*:\s*\[(.*)\]\s*$", re.IGNORECASE)
_OBJECTIVE_RE = re.compile(r"^objective\s*:\s*(.*)$", re.IGNORECASE)
_UNITS_RE = re.compile(r"^units\s*:\s*(.*)$", re.IGNORECASE)
_TARGET_RE = re.compile(r"^-\s*target\s+position\s*:\s*\((.*)\)\s*$", re.IGNORECASE)
_BEHAVIOR_RE = re.compile(r"^-\s*behavior\s*:\s*(\S+)\s*(.*)$", re.IGNORECASE)


def _parse_int(token: str, line: int, what: str) -> int:
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        raise InvalidPlanError(f"{what} must be an integer, got {token!r}", line) from None


def _parse_selector(text: str, line: int, what: str) -> UnitSelector:
    t = text.strip()
    if t.lower() == "all":
        return ALL_UNITS
    if not (t.startswith("[") and t.endswith("]")):
        raise InvalidPlanError(f"{what} must be 'all' or a bracketed id list, got {t!r}", line)
    body = t[1:-1].strip()
    if not body:
        return UnitSelector()
    items: list = []
    for raw in body.split(","):
        token = raw.strip()
        if not token:
            raise InvalidPlanError(f"empty entry in {what}", line)
        if ":" in token:
            a_txt, _, b_txt = token.partition(":")
            a = _parse_int(a_txt, line, "slice start") if a_txt.strip() else None
            b = _parse_int(b_txt, line, "slice end") if b_txt.strip() else None
            items.append((a, b))
        else:
            items.append(_parse_int(token, line, "unit id"))
    return UnitSelector(items=tuple(items))


def _parse_behavior(name: str, rest: str, line: int) -> PlanBehavior:
    key = name.lower()
    if key not in BEHAVIOR_TREES:
        raise InvalidPlanError(f"unknown behavior {name!r}", line)
    tokens = tuple(t.lower() for t in rest.split())
    for t in tokens:
        if t != "any" and t not in TYPE_TOKEN_ALIASES and t not in UNIT_TOKENS:
            raise InvalidPlanError(f"unknown unit type {t!r}", line)
    return PlanBehavior(key, tokens or ANY_FILTER)


@dataclass
class _GroupDraft:
    units: UnitSelector
    line: int
    target: tuple[int, int] | None = None
    behavior: PlanBehavior | None = None


@dataclass
class _StepDraft:
    id: int
    line: int
    prerequisites: tuple[int, ...] | None = None
    objective: Objective | None = None
    groups: list = field(default_factory=list)


def _finish_step(draft: _StepDraft, steps: dict[int, Step]) -> None:
    if draft.id in steps:
        raise InvalidPlanError(f"duplicate step id {draft.id}", draft.line)
    if draft.objective is None:
        raise InvalidPlanError(f"step {draft.id} has no objective", draft.line)
    if not draft.groups:
        raise InvalidPlanError(f"step {draft.id} has no unit groups", draft.line)
    groups = []
    for g in draft.groups:
        if g.behavior is None:
            raise InvalidPlanError(f"step {draft.id} has a group without a behavior", g.line)
        groups.append(Group(g.units, g.target, g.behavior))
    steps[draft.id] = Step(
        id=draft.id,
        prerequisites=draft.prerequisites or (),
        objective=draft.objective,
        groups=tuple(groups),
    )


def extract_plan_block(text: str) -> tuple[str, int]:
    """First BEGIN PLAN block body and the 1-based line where it starts."""
    begin = text.find(_BEGIN)
    if begin < 0:
        raise NoPlanError("no BEGIN PLAN marker found")
    end = text.find(_END, begin)
    if end < 0:
        raise NoPlanError("BEGIN PLAN without a matching END PLAN")
    block = text[begin + len(_BEGIN):end]
    return block, text.count("\n", 0, begin) + 1


def parse_plan(text: str) -> Plan:
    """Parse the first plan block in raw model output.

    Raises NoPlanError when the markers are absent and InvalidPlanError (with
    the offending line) on any grammar violation inside the block.
    """
    block, first_line = extract_plan_block(text)
    steps: dict[int, Step] = {}
    cur: _StepDraft | None = None
    group: _GroupDraft | None = None
    for i, raw in enumerate(block.split("\n")):
        line_no = first_line + i
        line = raw.strip()
        if not line:
            continue
        if m := _STEP_RE.match(line):
            if cur is not None:
                _finish_step(cur, steps)
            cur = _StepDraft(id=int(m.group(1)), line=line_no)
            group = None
            continue
        if cur is None:
            raise InvalidPlanError(f"expected 'Step N:' before {line!r}", line_no)
        if m := _PREREQ_RE.match(line):
            if cur.prerequisites is not None:
                raise InvalidPlanError(f"step {cur.id} has two prerequisite lists", line_no)
            body = m.group(1).strip()
            ids = tuple(
                _parse_int(t, line_no, "prerequisite id") for t in body.split(",")
            ) if body else ()
            cur.prerequisites = ids
            continue
        if m := _OBJECTIVE_RE.match(line):
            if cur.objective is not None:
                raise InvalidPlanError(f"step {cur.id} has two objectives", line_no)
            kind, _, rest = m.group(1).strip().partition(" ")
            if kind.lower() == "position":
                cur.objective = Objective(ObjectiveKind.POSITION)
            elif kind.lower() == "elimination":
                if not rest.strip():
                    raise InvalidPlanError("elimination objective needs a target list", line_no)
                sel = _parse_selector(rest, line_no, "elimination targets")
                cur.objective = Objective(ObjectiveKind.ELIMINATION, sel)
            else:
                raise InvalidPlanError(f"unknown objective {kind!r}", line_no)
            continue
        if m := _UNITS_RE.match(line):
            group = _GroupDraft(_parse_selector(m.group(1), line_no, "unit list"), line_no)
            cur.groups.append(group)
            continue
        if m := _TARGET_RE.match(line):
            if group is None:
                raise InvalidPlanError("target position outside a unit group", line_no)
            if group.target is not None:
                raise InvalidPlanError("group has two target positions", line_no)
            coords = m.group(1).split(",")
            if len(coords) != 2:
                raise InvalidPlanError(f"target position needs two coordinates, got {m.group(1)!r}", line_no)
            group.target = (
                _parse_int(coords[0], line_no, "x coordinate"),
                _parse_int(coords[1], line_no, "y coordinate"),
            )
            continue
        if m := _BEHAVIOR_RE.match(line):
            if group is None:
                raise InvalidPlanError("behavior outside a unit group", line_no)
            if group.behavior is not None:
                raise InvalidPlanError("group has two behaviors", line_no)
            group.behavior = _parse_behavior(m.group(1), m.group(2), line_no)
            continue
        raise InvalidPlanError(f"unrecognized plan line: {line!r}", line_no)
    if cur is not None:
        _finish_step(cur, steps)
    if not steps:
        raise InvalidPlanError("plan block contains no steps", first_line)
    begin = text.find(_BEGIN)
    end = text.find(_END, begin) + len(_END)
    return Plan(steps=steps, raw_text=text[begin:end])


def print_plan(plan: Plan) -> str:
    """Canonical plan text; parse_plan(print_plan(p)) equals p."""
    lines = [_BEGIN]
    for sid in plan.step_ids:
        step = plan.steps[sid]
        lines.append(f"Step {step.id}:")
        lines.append(f"prerequisites: [{', '.join(str(p) for p in step.prerequisites)}]")
        lines.append(f"objective: {step.objective.describe()}")
        for g in step.groups:
            lines.append(f"units: {g.units.describe()}")
            if g.target_position is not None:
                x, y = g.target_position
                lines.append(f"- target position: ({x}, {y})")
            lines.append(f"- behavior: {g.behavior.describe()}")
        lines.append("")
    lines[-1] = _END
    return "\n".join(lines)


# -- validation -------------------------------------------------------------------


class Severity(Enum):
    WARNING = "warning"
    FATAL = "fatal"


@dataclass(frozen=True)
class PlanViolation:
    severity: Severity
    message: str
    step_id: int | None = None

    def __str__(self) -> str:
        where = "plan" if self.step_id is None else f"step {self.step_id}"
        return f"[{self.severity.value}] {where}: {self.message}"


def _check_selector_bounds(
    sel: UnitSelector, roster: int, what: str, sid: int, out: list[PlanViolation]
) -> None:
    if sel.all_units:
        return
    if not sel.items:
        out.append(PlanViolation(Severity.WARNING, f"{what} selects no units", sid))
        return
    for item in sel.items:
        if isinstance(item, int):
            if not 0 <= item < roster:
                out.append(PlanViolation(
                    Severity.FATAL, f"{what} id {item} outside roster of {roster}", sid))
        else:
            a, b = item
            lo, hi = a or 0, roster if b is None else b
            text = f"{'' if a is None else a}:{'' if b is None else b}"
            if lo < 0:
                out.append(PlanViolation(
                    Severity.FATAL, f"{what} slice {text} has a negative start", sid))
            elif lo > roster or hi > roster:
                # Slices behave like Python slicing: out-of-range ends clip,
                # possibly down to an empty selection.
                out.append(PlanViolation(
                    Severity.WARNING,
                    f"{what} slice {text} exceeds roster of {roster}; clipped", sid))
            elif hi <= lo:
                out.append(PlanViolation(Severity.WARNING, f"{what} slice {text} is empty", sid))


def _find_cycle(plan: Plan) -> list[int] | None:
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {sid: WHITE for sid in plan.steps}
    stack: list[int] = []

    def visit(sid: int) -> list[int] | None:
        color[sid] = GRAY
        stack.append(sid)
        for p in plan.steps[sid].prerequisites:
            if p not in color:
                continue
            if color[p] == GRAY:
                return stack[stack.index(p):] + [p]
            if color[p] == WHITE:
                if found := visit(p):
                    return found
        stack.pop()
        color[sid] = BLACK
        return None

    for sid in plan.steps:
        if color[sid] == WHITE:
            if found := visit(sid):
                return found
    return None


def validate_plan(
    plan: Plan,
    ally_count: int,
    enemy_count: int,
    world: WorldMap | None = None,
    *,
    overlap_fatal: bool = False,
) -> list[PlanViolation]:
    """Static checks on a parsed plan; violations are data, fatals block execution.

    Group-overlap within a step is a warning by default because model output
    routinely reuses ids across groups; pass overlap_fatal=True for strict runs.
    """
    out: list[PlanViolation] = []
    for sid in plan.step_ids:
        step = plan.steps[sid]
        for p in step.prerequisites:
            if p not in plan.steps:
                out.append(PlanViolation(
                    Severity.FATAL, f"prerequisite {p} names a missing step", sid))
        if step.objective.kind is ObjectiveKind.ELIMINATION:
            _check_selector_bounds(
                step.objective.targets, enemy_count, "elimination target", sid, out)
        seen = np.zeros(ally_count, dtype=bool)
        overlap: list[int] = []
        for g in step.groups:
            _check_selector_bounds(g.units, ally_count, "unit list", sid, out)
            ids = g.units.resolve(ally_count)
            overlap.extend(ids[seen[ids]].tolist())
            seen[ids] = True
            if world is not None and g.target_position is not None:
                x, y = g.target_position
                try:
                    world.snap_to_passable(float(x), float(y))
                except ValueError as err:
                    out.append(PlanViolation(
                        Severity.FATAL, f"target position ({x}, {y}): {err}", sid))
        if overlap:
            ids = sorted(set(overlap))
            head = ", ".join(str(i) for i in ids[:6]) + ("…" if len(ids) > 6 else "")
            out.append(PlanViolation(
                Severity.FATAL if overlap_fatal else Severity.WARNING,
                f"{len(ids)} units in multiple groups ({head})", sid))
    if cycle := _find_cycle(plan):
        out.append(PlanViolation(
            Severity.FATAL,
            "prerequisite cycle: " + " -> ".join(str(s) for s in cycle)))
    return out


def fatal_violations(violations: list[PlanViolation]) -> list[PlanViolation]:
    return [v for v in violations if v.severity is Severity.FATAL]


# -- progression --------------------------------------------------------------------


def activate_steps(plan: Plan, achieved: set[int]) -> frozenset[int]:
    """Steps that are currently active: unachieved with all prerequisites met."""
    return frozenset(
        sid for sid, step in plan.steps.items()
        if sid not in achieved and all(p in achieved for p in step.prerequisites)
    )


class PlanRuntime:
    """Tracks step status and per-unit behavior assignments over an episode.

    The plan itself stays immutable; this object owns the achieved/active sets
    and an assignment table mapping each ally to a (tree, distance field) pair.
    Units never covered by an active group default to standing still.
    """

    def __init__(
        self,
        plan: Plan,
        world: WorldMap,
        ally_count: int,
        enemy_count: int,
        *,
        team: Team = Team.ALLY,
        position_radius: float = POSITION_RADIUS,
    ):
        self.plan = plan
        self.world = world
        self.ally_count = ally_count
        self.enemy_count = enemy_count
        self.team = team
        self.position_radius = position_radius
        self.achieved: set[int] = set()
        self.active = activate_steps(plan, self.achieved)
        self._pairs: list[tuple[BTNode, DistanceField | None]] = [
            (behavior_tree("stand", ANY_FILTER), None)
        ]
        self._pair_index: dict[tuple, int] = {}
        self.assignment = np.zeros(ally_count, dtype=np.int64)
        self.assign_behaviors()

    @property
    def complete(self) -> bool:
        return len(self.achieved) == len(self.plan.steps)

    def _pair_for(self, group: Group) -> int:
        target = group.target_position
        cell = None
        if target is not None:
            cell = self.world.snap_to_passable(float(target[0]), float(target[1]))
        key = (group.behavior.name, group.behavior.targets, cell)
        idx = self._pair_index.get(key)
        if idx is None:
            dist = None if cell is None else self.world.distance_field(target)
            self._pairs.append((group.behavior.tree(), dist))
            idx = len(self._pairs) - 1
            self._pair_index[key] = idx
        return idx

    def assign_behaviors(self) -> None:
        """Apply active steps in ascending id order; later assignments win."""
        steps = [self.plan.steps[sid] for sid in sorted(self.active)]
        targets = [
            g.target_position for s in steps for g in s.groups
            if g.target_position is not None
        ]
        if targets:
            self.world.distance_fields(targets)
        for step in steps:
            for group in step.groups:
                idx = self._pair_for(group)
                ids = group.units.resolve(self.ally_count)
                if len(ids):
                    self.assignment[ids] = idx

    def check_step_objectives(self, state) -> set[int]:
        """Ids of active steps whose objective is satisfied by `state`."""
        newly: set[int] = set()
        allies = state.teams[self.team]
        enemies = state.teams[self.team.other]
        for sid in self.active:
            step = self.plan.steps[sid]
            if step.objective.kind is ObjectiveKind.ELIMINATION:
                tids = step.objective.targets.resolve(len(enemies))
                if not enemies.alive[tids].any():
                    newly.add(sid)
                continue
            ok = True
            for group in step.groups:
                if group.target_position is None:
                    continue
                ids = group.units.resolve(len(allies))
                live = ids[allies.alive[ids]]
                if len(live) == 0:
                    continue
                tx, ty = group.target_position
                d = np.hypot(allies.pos[live, 0] - tx, allies.pos[live, 1] - ty)
                if not (d <= self.position_radius).all():
                    ok = False
                    break
            if ok:
                newly.add(sid)
        return newly

    def advance(self, state) -> set[int]:
        """Progress after an engine tick; returns steps achieved this call."""
        done: set[int] = set()
        while True:
            newly = self.check_step_objectives(state)
            if not newly:
                break
            done |= newly
            self.achieved |= newly
            self.active = activate_steps(self.plan, self.achieved)
        if done:
            self.assign_behaviors()
        return done

    def behavior_groups(self) -> list[tuple[BTNode, DistanceField | None, np.ndarray]]:
        """Current assignments shaped for the group evaluator."""
        out = []
        for idx in np.unique(self.assignment):
            tree, dist = self._pairs[idx]
            out.append((tree, dist, np.nonzero(self.assignment == idx)[0]))
        return out
