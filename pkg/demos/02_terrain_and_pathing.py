"""A river, a bridge, a forest — and a unit that finds its way across.

Builds a map from shapes, renders it as ASCII, then walks the distance field
from the far bank to a target and shows how forests block sight but not feet.
"""

import numpy as np

from phalanx.terrain import (
    Circle,
    MapFeature,
    Rect,
    TerrainKind,
    WorldMap,
    next_step_direction,
)

world = WorldMap(
    48,
    28,
    features=(
        MapFeature("Broad River", TerrainKind.WATER, (Rect(20, 0, 25, 27),)),
        MapFeature("Old Bridge", TerrainKind.NORMAL, (Rect(20, 12, 25, 15),)),
        MapFeature("Dark Forest", TerrainKind.FOREST, (Circle(36, 20, 5),)),
    ),
)

GLYPH = ".♣~#"  # indexed by kind_grid code: ground, forest, water, building

print("The map (first feature painted first; later shapes repaint earlier ones):\n")
for iy in range(world.height - 1, -1, -1):
    row = "".join(GLYPH[world.kind_grid[ix, iy]] for ix in range(world.width))
    print("   " + row)
print("\n   . ground   ~ water   ♣ forest (walkable, blocks sight)\n")

target = (44.0, 4.0)
field = world.distance_field(target)
start = (4.0, 22.0)
straight = float(np.hypot(target[0] - start[0], target[1] - start[1]))
print(f"March from {start} to {target}: the distance field already knows")
print(f"the shortest path costs {field.value_at(*start):.1f} m (straight line would be")
print(f"{straight:.1f} m, but the river is in the way).\n")

pos = np.array(start)
trail = [(round(float(pos[0]), 1), round(float(pos[1]), 1))]
ticks = 0
while field.value_at(float(pos[0]), float(pos[1])) > 2.0 and ticks < 200:
    direction = next_step_direction(field, (float(pos[0]), float(pos[1])))
    if direction is None:
        break
    pos = pos + np.array(direction) * 2.0  # walking pace: 2 m per tick
    trail.append((round(float(pos[0]), 1), round(float(pos[1]), 1)))
    ticks += 1
waypoints = " -> ".join(str(p) for p in trail[:: max(1, len(trail) // 6)])
print(f"Walking 2 m per tick it takes {ticks} ticks; the route squeezes")
print(f"through the bridge: {waypoints}\n")

watcher = (29.0, 20.0)
hidden = (40.0, 20.0)
open_spot = (29.0, 8.0)
print(f"Sight check from {watcher}:")
print(f"  toward {hidden} (through the forest): "
      + ("sees it" if world.line_of_sight(watcher, hidden) else "blocked"))
print(f"  toward {open_spot} (open ground):      "
      + ("sees it" if world.line_of_sight(watcher, open_spot) else "blocked"))
print("\nForests hide what is inside or behind them, but units walk through freely —")
print("that asymmetry is what makes flanking routes through the trees worthwhile.")
