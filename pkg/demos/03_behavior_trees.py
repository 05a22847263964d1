"""One archer, one approaching knight, and the tree that decides what to do.

Behavior trees are written in a four-letter DSL: S(...) runs children until one
fails, F(...) until one succeeds, C(...) checks a condition, A(...) emits an
action. This demo parses the bundled long-range-attack tree and watches a
single archer's decision flip as a cavalry unit closes in.
"""

import numpy as np

from phalanx.bt.library import library_text
from phalanx.bt.interpreter import eval_bt
from phalanx.bt.nodes import print_bt
from phalanx.bt.parser import parse_bt
from phalanx.engine import GameState, RosterGroup, observe, spawn_roster
from phalanx.rng import TickRng
from phalanx.terrain import Rect, WorldMap
from phalanx.units import Team

source = library_text()["long_range_attack"]
tree = parse_bt(source)
print("The bundled long-range-attack tree:\n")
print("   " + source.strip())
print("\nprinted back from the parsed form (parse and print are inverses):\n")
print("   " + print_bt(tree))

world = WorldMap(60, 40)
archer = spawn_roster(world, [RosterGroup("archer", 1, Rect(19, 19, 21, 21))], seed=3, team=Team.ALLY)
knight = spawn_roster(world, [RosterGroup("cavalry", 1, Rect(50, 19, 52, 21))], seed=4, team=Team.ENEMY)
state = GameState(map=world, seed=11, tick=0, teams={Team.ALLY: archer, Team.ENEMY: knight})
archer.pos[0] = (20.0, 20.0)

print("\nAn archer sees 15 m, shoots 15 m, and walks 2 m per tick.")
print("A cavalry unit reaches 1 m but covers 6 m per tick, so the tree treats")
print("anything inside ~19 m (reach + three ticks of closing speed) as a threat.\n")

for distance in (30.0, 14.0, 8.0):
    knight.pos[0] = (20.0 + distance, 20.0)
    obs = observe(state, 0, Team.ALLY)
    success, action = eval_bt(tree, obs, TickRng(state.seed, state.tick))
    verdict = action if action is not None else "nothing (tree failed)"
    print(f"cavalry at {distance:4.1f} m -> {verdict}")

print("\nAt 30 m the knight is beyond sight, no branch applies, and the archer")
print("idles. Inside sight the retreat branch outranks the attack branch, so a")
print("healthy archer kites: it backs away from cavalry it could legally shoot.")

infantry = spawn_roster(world, [RosterGroup("spearman", 1, Rect(30, 19, 32, 21))], seed=5, team=Team.ENEMY)
state = GameState(map=world, seed=11, tick=0, teams={Team.ALLY: archer, Team.ENEMY: infantry})
infantry.pos[0] = (34.0, 20.0)
obs = observe(state, 0, Team.ALLY)
success, action = eval_bt(tree, obs, TickRng(state.seed, state.tick))
print(f"\nSwap the knight for a spearman at 14 m -> {action}")
print("A spearman threatens only ~4 m (reach 1 + three ticks at walking speed),")
print("so the same tree stands its ground and looses an arrow instead.")
