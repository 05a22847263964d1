"""The shipped tree library, parsed once from its text asset.

Five trees are available to the player side (and to plan behaviors):
long_range_attack, close_range_attack, attack_and_move, move_to_target,
stand.  Two forest-averse variants exist for scripted opposition on
wooded maps: they walk out of trees before fighting, so they cannot be
blinded indefinitely.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from .nodes import BTNode
from .parser import parse_bt

PLAYER_TREES = (
    "long_range_attack",
    "close_range_attack",
    "attack_and_move",
    "move_to_target",
    "stand",
)
OPPONENT_TREES = ("long_range_attack_avoid_forest", "close_range_attack_avoid_forest")


@lru_cache(maxsize=1)
def library_text() -> dict[str, str]:
    raw = resources.files("phalanx.data").joinpath("bt_library.json").read_text("utf-8")
    return json.loads(raw)


@lru_cache(maxsize=1)
def standard_library() -> dict[str, BTNode]:
    return {name: parse_bt(text) for name, text in library_text().items()}


def library_tree(name: str) -> BTNode:
    return standard_library()[name]
