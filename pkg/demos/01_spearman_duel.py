"""Two spearmen walk up to each other and fight to the death.

Shows the tick model at its smallest: attacks are simultaneous and resolved
from the pre-tick state, so two identical units kill each other on the same
tick — there is no first-mover advantage.
"""

from phalanx.bt.library import standard_library
from phalanx.bt.vector import evaluate_groups
from phalanx.engine import GameState, RosterGroup, spawn_roster, step_game
from phalanx.terrain import Rect, WorldMap

import numpy as np

from phalanx.units import Team

world = WorldMap(30, 30)
blue = spawn_roster(world, [RosterGroup("spearman", 1, Rect(10, 14, 12, 16))], seed=1, team=Team.ALLY)
red = spawn_roster(world, [RosterGroup("spearman", 1, Rect(16, 14, 18, 16))], seed=2, team=Team.ENEMY)
state = GameState(map=world, seed=7, tick=0, teams={Team.ALLY: blue, Team.ENEMY: red})

tree = standard_library()["close_range_attack"]
idx = np.arange(1)

print("A spearman has 24 health, deals 1 damage, and reaches 1 m.")
print("Both units run the bundled close-range-attack behavior.\n")

while state.teams[Team.ALLY].alive.any() and state.teams[Team.ENEMY].alive.any():
    actions = {
        team: evaluate_groups(state, team, [(tree, None, idx)]) for team in Team
    }
    state = step_game(state, actions)
    a, e = state.teams[Team.ALLY], state.teams[Team.ENEMY]
    gap = float(np.hypot(*(a.pos[0] - e.pos[0])))
    print(
        f"tick {state.tick:3d}  blue hp {max(a.health[0], 0):2d}  "
        f"red hp {max(e.health[0], 0):2d}  gap {gap:4.2f} m"
    )

a, e = state.teams[Team.ALLY], state.teams[Team.ENEMY]
print()
if not a.alive.any() and not e.alive.any():
    print("Both died on the same tick: swings land simultaneously, so neither")
    print("spearman ever gets a free hit. Rerun with any seed — same story.")
else:
    winner = "blue" if a.alive.any() else "red"
    print(f"The {winner} spearman survived (spawn jitter gave it the first swing).")
