"""Recursive-descent parser for the behavior-tree text form.

Accepted language (whitespace-insensitive, "::" and "|>" both separate
children):

    nodes     : node (("::" | "|>") node)*
    node      : "S" "(" nodes ")" | "F" "(" nodes ")"
              | "A" "(" atomic ")" | "C" "(" atomic ")"
    atomic    : move | attack | stand | follow_map | in_sight | in_reach
              | is_dying | is_armed | is_flock | is_type | is_in_forest
              | success_action | failure_action
    move      : "move" (direction | sense qualifier side filter?)
    attack    : "attack" qualifier filter?
    in_sight  : "in_sight" side filter?
    in_reach  : "in_reach" side source time filter?
    is_dying  : "is_dying" subject intensity
    is_armed  : "is_armed" subject
    is_flock  : "is_flock" side direction
    is_type   : "is_type" negation unit
    follow_map: "follow_map" sense intensity?
    filter    : unit ("or" unit)* | "any"

An omitted filter means "any".  Unit names outside the shipped roster
(balista, dragon, civilian) parse fine and are reported via
`phantom_units`; they simply never match a unit in play.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..units import PHANTOM_TYPE_TOKENS
from . import nodes as N

_TOKEN_RE = re.compile(r"::|\|>|[()]|[A-Za-z_][A-Za-z_0-9]*")

_KEYWORD_SETS = {
    "qualifier": N.QUALIFIERS,
    "sense": N.SENSES,
    "direction": N.DIRECTIONS,
    "side": N.SIDES,
    "subject": N.SUBJECTS,
    "intensity": N.INTENSITIES,
    "time": N.TIMES,
    "source": N.SOURCES,
    "negation": N.NEGATIONS,
    "unit": N.UNIT_TOKENS,
}


class BTSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.column = column
        self.expected = expected
        suffix = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at line {line}, column {column}{suffix}")


@dataclass(frozen=True)
class _Tok:
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    for ln, line in enumerate(text.splitlines() or [""], start=1):
        pos = 0
        while pos < len(line):
            if line[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(line, pos)
            if not m:
                raise BTSyntaxError(f"unexpected character {line[pos]!r}", ln, pos + 1)
            toks.append(_Tok(m.group(), ln, m.start() + 1))
            pos = m.end()
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok], src: str):
        self.toks = toks
        self.i = 0
        self.src = src
        self.phantom_units: set[str] = set()

    def _err(self, message: str, expected: tuple[str, ...] = ()):
        if self.i < len(self.toks):
            t = self.toks[self.i]
            raise BTSyntaxError(message, t.line, t.column, expected)
        lines = self.src.splitlines() or [""]
        raise BTSyntaxError(message + " (input ended)", len(lines), len(lines[-1]) + 1, expected)

    def peek(self) -> str | None:
        return self.toks[self.i].text if self.i < len(self.toks) else None

    def take(self, *want: str) -> str:
        got = self.peek()
        if got is None or (want and got not in want):
            self._err(f"unexpected {got!r}" if got else "unexpected end of input", want)
        self.i += 1
        return got

    def take_from(self, kind: str) -> str:
        return self.take(*_KEYWORD_SETS[kind])

    def parse(self) -> N.BTNode:
        tree = self.node()
        if self.i != len(self.toks):
            self._err(f"trailing input {self.peek()!r}")
        return tree

    def node(self) -> N.BTNode:
        head = self.take("S", "F", "A", "C")
        self.take("(")
        if head in ("S", "F"):
            children = [self.node()]
            while self.peek() in ("::", "|>"):
                self.take()
                children.append(self.node())
            self.take(")")
            return (N.Sequence if head == "S" else N.Fallback)(tuple(children))
        atomic = self.atomic()
        self.take(")")
        return (N.Action if head == "A" else N.Condition)(atomic)

    def unit_filter(self) -> tuple[str, ...]:
        nxt = self.peek()
        if nxt == "any":
            self.take()
            return N.ANY_FILTER
        if nxt in N.UNIT_TOKENS:
            units = [self.take()]
            while self.peek() == "or":
                self.take()
                units.append(self.take_from("unit"))
            self.phantom_units.update(u for u in units if u in PHANTOM_TYPE_TOKENS)
            return tuple(units)
        return N.ANY_FILTER  # omitted filter

    def atomic(self) -> N.Atomic:
        name = self.take(
            "move", "attack", "stand", "follow_map", "in_sight", "in_reach",
            "is_dying", "is_armed", "is_flock", "is_type", "is_in_forest",
            "success_action", "failure_action",
        )
        if name == "move":
            if self.peek() in N.DIRECTIONS:
                return N.MoveDir(self.take())
            sense = self.take_from("sense")
            qualifier = self.take_from("qualifier")
            side = self.take_from("side")
            return N.MoveRel(sense, qualifier, side, self.unit_filter())
        if name == "attack":
            return N.AttackAtom(self.take_from("qualifier"), self.unit_filter())
        if name == "stand":
            return N.Stand()
        if name == "follow_map":
            sense = self.take_from("sense")
            intensity = self.take() if self.peek() in N.INTENSITIES else None
            return N.FollowMap(sense, intensity)
        if name == "in_sight":
            return N.InSight(self.take_from("side"), self.unit_filter())
        if name == "in_reach":
            side = self.take_from("side")
            source = self.take_from("source")
            time = self.take_from("time")
            return N.InReach(side, source, time, self.unit_filter())
        if name == "is_dying":
            return N.IsDying(self.take_from("subject"), self.take_from("intensity"))
        if name == "is_armed":
            return N.IsArmed(self.take_from("subject"))
        if name == "is_flock":
            return N.IsFlock(self.take_from("side"), self.take_from("direction"))
        if name == "is_type":
            return N.IsType(self.take_from("negation"), self.take_from("unit"))
        if name == "is_in_forest":
            return N.IsInForest()
        if name == "success_action":
            return N.SuccessAction()
        return N.FailureAction()


@dataclass
class ParseResult:
    tree: N.BTNode
    phantom_units: frozenset[str]


def parse_bt(text: str) -> N.BTNode:
    """Parse tree text; raises BTSyntaxError with line/column on bad input."""
    return parse_bt_flagged(text).tree


def parse_bt_flagged(text: str) -> ParseResult:
    """Like parse_bt but also reports unit names with no shipped stats."""
    p = _Parser(_tokenize(text), text)
    tree = N.assign_uids(p.parse())
    return ParseResult(tree, frozenset(p.phantom_units))
