"""Behavior-tree AST and its canonical text form.

Composite nodes are S(...) sequences and F(...) fallbacks; leaves are
A(atomic) action nodes and C(atomic) condition nodes.  Child separators
"::" and "|>" are interchangeable on input; the printer always emits
"::".  `print_bt` followed by `parse_bt` reproduces an equal AST.

Node equality is structural.  ``uid`` is a preorder index assigned after
parsing; it keys random draws so the array evaluator and the per-unit
interpreter consume identical random streams.  It is excluded from
equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Iterator, Sequence

ANY_FILTER: tuple[str, ...] = ("any",)

QUALIFIERS = ("strongest", "weakest", "closest", "farthest", "random")
SENSES = ("toward", "away_from")
DIRECTIONS = ("north", "east", "south", "west", "center")
SIDES = ("foe", "friend")
SUBJECTS = ("self", "foe", "friend")
INTENSITIES = ("low", "middle", "high")
TIMES = ("now", "low", "middle", "high")
SOURCES = ("them_from_me", "me_from_them")
NEGATIONS = ("a", "not_a")
UNIT_TOKENS = ("spearmen", "archer", "cavalry", "balista", "dragon", "civilian")


def _fmt_filter(unit_filter: tuple[str, ...]) -> str:
    return " or ".join(unit_filter)


@dataclass(eq=True)
class Atomic:
    uid: int = field(default=-1, compare=False, init=False, repr=False)


@dataclass(eq=True)
class MoveDir(Atomic):
    direction: str

    def print(self) -> str:
        return f"move {self.direction}"


@dataclass(eq=True)
class MoveRel(Atomic):
    sense: str
    qualifier: str
    side: str
    unit_filter: tuple[str, ...]

    def print(self) -> str:
        return f"move {self.sense} {self.qualifier} {self.side} {_fmt_filter(self.unit_filter)}"


@dataclass(eq=True)
class AttackAtom(Atomic):
    qualifier: str
    unit_filter: tuple[str, ...]

    def print(self) -> str:
        return f"attack {self.qualifier} {_fmt_filter(self.unit_filter)}"


@dataclass(eq=True)
class Stand(Atomic):
    def print(self) -> str:
        return "stand"


@dataclass(eq=True)
class FollowMap(Atomic):
    sense: str
    intensity: str | None = None

    def print(self) -> str:
        return f"follow_map {self.sense}" + (f" {self.intensity}" if self.intensity else "")


@dataclass(eq=True)
class InSight(Atomic):
    side: str
    unit_filter: tuple[str, ...]

    def print(self) -> str:
        return f"in_sight {self.side} {_fmt_filter(self.unit_filter)}"


@dataclass(eq=True)
class InReach(Atomic):
    side: str
    source: str
    time: str
    unit_filter: tuple[str, ...]

    def print(self) -> str:
        return f"in_reach {self.side} {self.source} {self.time} {_fmt_filter(self.unit_filter)}"


@dataclass(eq=True)
class IsDying(Atomic):
    subject: str
    intensity: str

    def print(self) -> str:
        return f"is_dying {self.subject} {self.intensity}"


@dataclass(eq=True)
class IsArmed(Atomic):
    subject: str

    def print(self) -> str:
        return f"is_armed {self.subject}"


@dataclass(eq=True)
class IsFlock(Atomic):
    side: str
    direction: str

    def print(self) -> str:
        return f"is_flock {self.side} {self.direction}"


@dataclass(eq=True)
class IsType(Atomic):
    negation: str
    unit: str

    def print(self) -> str:
        return f"is_type {self.negation} {self.unit}"


@dataclass(eq=True)
class IsInForest(Atomic):
    def print(self) -> str:
        return "is_in_forest"


@dataclass(eq=True)
class SuccessAction(Atomic):
    def print(self) -> str:
        return "success_action"


@dataclass(eq=True)
class FailureAction(Atomic):
    def print(self) -> str:
        return "failure_action"


@dataclass(eq=True)
class BTNode:
    uid: int = field(default=-1, compare=False, init=False, repr=False)


@dataclass(eq=True)
class Action(BTNode):
    atomic: Atomic

    def print(self) -> str:
        return f"A({self.atomic.print()})"


@dataclass(eq=True)
class Condition(BTNode):
    atomic: Atomic

    def print(self) -> str:
        return f"C({self.atomic.print()})"


@dataclass(eq=True)
class Sequence(BTNode):
    children: tuple[BTNode, ...]

    def print(self) -> str:
        return "S(" + " :: ".join(c.print() for c in self.children) + ")"


@dataclass(eq=True)
class Fallback(BTNode):
    children: tuple[BTNode, ...]

    def print(self) -> str:
        return "F(" + " :: ".join(c.print() for c in self.children) + ")"


def print_bt(tree: BTNode) -> str:
    return tree.print()


def walk(tree: BTNode) -> Iterator[BTNode | Atomic]:
    """Preorder traversal over nodes and their atomics."""
    yield tree
    if isinstance(tree, (Sequence, Fallback)):
        for c in tree.children:
            yield from walk(c)
    elif isinstance(tree, (Action, Condition)):
        yield tree.atomic


def assign_uids(tree: BTNode) -> BTNode:
    """Number nodes and atomics in preorder; returns the same tree."""
    for i, n in enumerate(walk(tree)):
        n.uid = i
    return tree


FOE_DIRECTED = (AttackAtom, MoveRel, InSight, InReach)


def substitute_targets(tree: BTNode, unit_filter: Sequence[str]) -> BTNode:
    """Copy of `tree` with "any" filters on foe-directed atomics replaced.

    Friend-directed atomics and explicit (non-"any") filters stay as
    written.  Passing ["any"] returns an identical copy.
    """
    unit_filter = tuple(unit_filter)
    if not unit_filter:
        raise ValueError("substitute_targets: empty filter")

    def sub_atomic(a: Atomic) -> Atomic:
        if isinstance(a, FOE_DIRECTED) and getattr(a, "side", "foe") == "foe":
            if a.unit_filter == ANY_FILTER and unit_filter != ANY_FILTER:
                kw = {f.name: getattr(a, f.name) for f in fields(a) if f.init}
                kw["unit_filter"] = unit_filter
                return type(a)(**kw)
        return a

    def sub(n: BTNode) -> BTNode:
        if isinstance(n, Sequence):
            return Sequence(tuple(sub(c) for c in n.children))
        if isinstance(n, Fallback):
            return Fallback(tuple(sub(c) for c in n.children))
        if isinstance(n, Action):
            return Action(sub_atomic(n.atomic))
        return Condition(sub_atomic(n.atomic))

    return assign_uids(sub(tree))
