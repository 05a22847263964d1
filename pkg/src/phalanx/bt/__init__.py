"""Behavior trees: grammar, evaluation, and the shipped library."""

from .nodes import (
    Action,
    Atomic,
    BTNode,
    Condition,
    Fallback,
    Sequence,
    assign_uids,
    print_bt,
    substitute_targets,
    walk,
)
from .parser import BTSyntaxError, ParseResult, parse_bt, parse_bt_flagged
from .interpreter import eval_bt
from .library import OPPONENT_TREES, PLAYER_TREES, library_text, library_tree, standard_library

__all__ = [
    "Action",
    "Atomic",
    "BTNode",
    "BTSyntaxError",
    "Condition",
    "Fallback",
    "OPPONENT_TREES",
    "PLAYER_TREES",
    "ParseResult",
    "Sequence",
    "assign_uids",
    "eval_bt",
    "library_text",
    "library_tree",
    "parse_bt",
    "parse_bt_flagged",
    "print_bt",
    "standard_library",
    "substitute_targets",
    "walk",
]
