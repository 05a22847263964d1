"""Map model: terrain shapes, rasterized grids, sight, and path fields.

World coordinates are continuous meters with the origin at the
bottom-left corner, x pointing east and y pointing north.  The map is
rasterized onto a 1 m grid; grids are numpy arrays of shape
(width, height) indexed ``grid[ix, iy]`` (x first, unlike the usual
row/column convention — keeps code in (x, y) order everywhere).

A cell belongs to the last feature shape covering its center; cells
covered by nothing are Normal ground.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

SQRT2 = math.sqrt(2.0)
# Fixed neighbor enumeration: N, NE, E, SE, S, SW, W, NW (ties resolved in this order).
NEIGHBOR_OFFSETS = np.array(
    [(0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)],
    dtype=np.int64,
)
NEIGHBOR_COSTS = np.array([1.0, SQRT2, 1.0, SQRT2, 1.0, SQRT2, 1.0, SQRT2])

SNAP_RADIUS = 5.0  # how far a blocked target may be moved to the nearest passable cell


class TerrainKind(Enum):
    NORMAL = "normal"
    FOREST = "trees"
    WATER = "water"
    BUILDING = "buildings"

    @property
    def passable(self) -> bool:
        return self in (TerrainKind.NORMAL, TerrainKind.FOREST)

    @property
    def opaque(self) -> bool:
        return self in (TerrainKind.FOREST, TerrainKind.BUILDING)

    @property
    def display(self) -> str:
        return self.value


_KIND_ALIASES = {
    "normal": TerrainKind.NORMAL,
    "forest": TerrainKind.FOREST,
    "trees": TerrainKind.FOREST,
    "water": TerrainKind.WATER,
    "building": TerrainKind.BUILDING,
    "buildings": TerrainKind.BUILDING,
}


def kind_from_name(name: str) -> TerrainKind:
    try:
        return _KIND_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown terrain kind {name!r}") from None


class MapValidationError(ValueError):
    pass


def _fmt(v: float) -> str:
    return f"{v:g}"


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    radius: float

    def describe(self) -> str:
        return f"({_fmt(self.cx)}, {_fmt(self.cy)}) with radius {_fmt(self.radius)}"


@dataclass(frozen=True)
class Rect:
    x1: float
    y1: float
    x2: float
    y2: float

    def describe(self) -> str:
        return f"({_fmt(self.x1)}, {_fmt(self.y1)}) - ({_fmt(self.x2)}, {_fmt(self.y2)})"


Shape = Circle | Rect


@dataclass(frozen=True)
class MapFeature:
    name: str
    kind: TerrainKind
    shapes: tuple[Shape, ...]

    def validate(self) -> None:
        if not self.shapes:
            raise MapValidationError(f"feature {self.name!r} has no shapes")
        for s in self.shapes:
            if isinstance(s, Circle) and s.radius <= 0:
                raise MapValidationError(f"feature {self.name!r}: circle radius must be > 0")
            if isinstance(s, Rect) and not (s.x2 > s.x1 and s.y2 > s.y1):
                raise MapValidationError(f"feature {self.name!r}: rect corners inverted or degenerate")


def _paint(shape: Shape, cx_grid: np.ndarray, cy_grid: np.ndarray) -> np.ndarray:
    """Boolean coverage mask: a cell is covered iff its center is inside the shape."""
    if isinstance(shape, Circle):
        return (cx_grid - shape.cx) ** 2 + (cy_grid - shape.cy) ** 2 <= shape.radius**2
    return (cx_grid >= shape.x1) & (cx_grid <= shape.x2) & (cy_grid >= shape.y1) & (cy_grid <= shape.y2)


class WorldMap:
    """Immutable after construction.  Grids and the path graph are shared freely."""

    def __init__(self, width: int, height: int, features: Sequence[MapFeature] = ()):
        if width <= 0 or height <= 0:
            raise MapValidationError("map bounds must be positive")
        self.width = int(width)
        self.height = int(height)
        self.features = tuple(features)
        for f in self.features:
            f.validate()

        cx = np.arange(self.width, dtype=np.float64) + 0.5
        cy = np.arange(self.height, dtype=np.float64) + 0.5
        cxg, cyg = np.meshgrid(cx, cy, indexing="ij")
        kind_idx = np.zeros((self.width, self.height), dtype=np.int8)
        kinds = list(TerrainKind)
        for f in self.features:
            code = kinds.index(f.kind)
            for s in f.shapes:
                kind_idx[_paint(s, cxg, cyg)] = code
        self.kind_grid = kind_idx
        self.kind_grid.setflags(write=False)

        passable_by_code = np.array([k.passable for k in kinds])
        opaque_by_code = np.array([k.opaque for k in kinds])
        forest_code = kinds.index(TerrainKind.FOREST)
        self.passable = passable_by_code[kind_idx]
        self.opaque = opaque_by_code[kind_idx]
        self.forest = kind_idx == forest_code
        for g in (self.passable, self.opaque, self.forest):
            g.setflags(write=False)

        # Summed-area table of the opaque mask: O(1) "any opaque cell in bbox?" queries.
        integral = np.zeros((self.width + 1, self.height + 1), dtype=np.int64)
        np.cumsum(np.cumsum(self.opaque, axis=0), axis=1, out=integral[1:, 1:])
        self._opaque_integral = integral
        self._opaque_integral.setflags(write=False)
        self._graph: csr_matrix | None = None
        self._field_cache: dict[tuple[int, int], DistanceField] = {}

    # -- cells ---------------------------------------------------------------

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = min(int(x), self.width - 1)
        iy = min(int(y), self.height - 1)
        return max(ix, 0), max(iy, 0)

    def cells_of(self, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vector form of cell_of for an (N, 2) position array."""
        ix = np.clip(pos[:, 0].astype(np.int64), 0, self.width - 1)
        iy = np.clip(pos[:, 1].astype(np.int64), 0, self.height - 1)
        return ix, iy

    def passable_at(self, pos: np.ndarray) -> np.ndarray:
        """Passability per row of an (N, 2) position array; out-of-bounds is impassable."""
        inb = (
            (pos[:, 0] >= 0.0)
            & (pos[:, 0] < self.width)
            & (pos[:, 1] >= 0.0)
            & (pos[:, 1] < self.height)
        )
        ix, iy = self.cells_of(pos)
        return inb & self.passable[ix, iy]

    def opaque_in_bbox(self, x0, y0, x1, y1) -> np.ndarray:
        """Count of opaque cells in the inclusive cell-index bbox (vectorized)."""
        itg = self._opaque_integral
        return itg[x1 + 1, y1 + 1] - itg[x0, y1 + 1] - itg[x1 + 1, y0] + itg[x0, y0]

    # -- sight ---------------------------------------------------------------

    def line_of_sight(self, a: tuple[float, float], b: tuple[float, float]) -> bool:
        ax, ay = a
        bx, by = b
        if not (self.in_bounds(ax, ay) and self.in_bounds(bx, by)):
            raise ValueError(f"line_of_sight endpoint out of bounds: {a} -> {b}")
        ca = self.cell_of(ax, ay)
        cb = self.cell_of(bx, by)
        if self.forest[ca] or self.forest[cb]:
            return False
        if ca == cb:
            return True
        # Cheap reject: no opaque cell anywhere in the segment's bounding box.
        x0, x1 = sorted((ca[0], cb[0]))
        y0, y1 = sorted((ca[1], cb[1]))
        if self.opaque_in_bbox(x0, y0, x1, y1) == 0:
            return True
        for ix, iy in traverse_cells(ax, ay, bx, by):
            if self.opaque[ix, iy]:
                return False
        return True

    # -- path fields -----------------------------------------------------------

    def _node(self, ix: int, iy: int) -> int:
        return ix * self.height + iy

    def _build_graph(self) -> csr_matrix:
        """8-neighbor grid graph over passable cells; no corner cutting."""
        if self._graph is not None:
            return self._graph
        w, h = self.width, self.height
        ix, iy = np.meshgrid(np.arange(w), np.arange(h), indexing="ij")
        ix = ix.ravel()
        iy = iy.ravel()
        rows = []
        cols = []
        data = []
        pas = self.passable
        for (dx, dy), cost in zip(NEIGHBOR_OFFSETS, NEIGHBOR_COSTS):
            jx = ix + dx
            jy = iy + dy
            ok = (jx >= 0) & (jx < w) & (jy >= 0) & (jy < h)
            jxc = np.clip(jx, 0, w - 1)
            jyc = np.clip(jy, 0, h - 1)
            ok &= pas[ix, iy] & pas[jxc, jyc]
            if dx != 0 and dy != 0:
                # Diagonal step allowed only when both orthogonal neighbors are passable.
                ok &= pas[jxc, iy] & pas[ix, jyc]
            rows.append(self._node(ix[ok], iy[ok]))
            cols.append(self._node(jxc[ok], jyc[ok]))
            data.append(np.full(int(ok.sum()), cost))
        n = w * h
        self._graph = csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        return self._graph

    def snap_to_passable(self, x: float, y: float, radius: float = SNAP_RADIUS) -> tuple[int, int]:
        """Cell of (x, y), or the nearest passable cell center within `radius`."""
        if not self.in_bounds(x, y):
            raise ValueError(f"target ({x}, {y}) out of bounds")
        ix, iy = self.cell_of(x, y)
        if self.passable[ix, iy]:
            return ix, iy
        r = int(math.ceil(radius)) + 1
        x0, x1 = max(ix - r, 0), min(ix + r + 1, self.width)
        y0, y1 = max(iy - r, 0), min(iy + r + 1, self.height)
        sub = self.passable[x0:x1, y0:y1]
        cand = np.argwhere(sub)
        if len(cand):
            cxs = cand[:, 0] + x0 + 0.5
            cys = cand[:, 1] + y0 + 0.5
            d = np.hypot(cxs - x, cys - y)
            order = np.lexsort((cand[:, 1], cand[:, 0], d))
            best = order[0]
            if d[best] <= radius:
                return int(cand[best, 0] + x0), int(cand[best, 1] + y0)
        raise ValueError(f"no passable cell within {radius} m of ({x}, {y})")

    def distance_fields(self, targets: Sequence[tuple[float, float]]) -> list["DistanceField"]:
        """Batch field construction; one Dijkstra sweep for all uncached targets."""
        snapped = [self.snap_to_passable(tx, ty) for tx, ty in targets]
        missing = sorted({c for c in snapped if c not in self._field_cache})
        if missing:
            graph = self._build_graph()
            idx = [self._node(ix, iy) for ix, iy in missing]
            dmat = _csgraph_dijkstra(graph, directed=True, indices=idx)
            for cell, row in zip(missing, dmat):
                grid = row.reshape(self.width, self.height)
                self._field_cache[cell] = DistanceField(target=cell, dist=grid, world=self)
        return [self._field_cache[c] for c in snapped]

    def distance_field(self, target: tuple[float, float]) -> "DistanceField":
        return self.distance_fields([target])[0]

    # -- description -----------------------------------------------------------

    def describe(self) -> str:
        lines = []
        for f in self.features:
            shapes = ", ".join(s.describe() for s in f.shapes)
            lines.append(f"{f.name}: {f.kind.display} at {shapes}")
        return "\n".join(lines)

    # -- serialization -----------------------------------------------------------

    def to_json(self) -> dict:
        feats = []
        for f in self.features:
            shapes = []
            for s in f.shapes:
                if isinstance(s, Circle):
                    shapes.append({"circle": [s.cx, s.cy, s.radius]})
                else:
                    shapes.append({"rect": [s.x1, s.y1, s.x2, s.y2]})
            feats.append({"name": f.name, "kind": f.kind.value, "shapes": shapes})
        return {"width": self.width, "height": self.height, "features": feats}

    @classmethod
    def from_json(cls, doc: dict) -> "WorldMap":
        feats = []
        for fd in doc.get("features", ()):
            shapes: list[Shape] = []
            for sd in fd["shapes"]:
                if "circle" in sd:
                    cx, cy, r = sd["circle"]
                    shapes.append(Circle(cx, cy, r))
                elif "rect" in sd:
                    x1, y1, x2, y2 = sd["rect"]
                    shapes.append(Rect(x1, y1, x2, y2))
                else:
                    raise MapValidationError(f"feature {fd.get('name')!r}: unknown shape {sd}")
            feats.append(MapFeature(fd["name"], kind_from_name(fd["kind"]), tuple(shapes)))
        return cls(doc["width"], doc["height"], feats)

    @classmethod
    def load(cls, path) -> "WorldMap":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)


@dataclass
class DistanceField:
    """Shortest-path meters from every cell to `target` (a passable cell)."""

    target: tuple[int, int]
    dist: np.ndarray  # (width, height), +inf where unreachable/impassable
    world: WorldMap = field(repr=False)

    def __post_init__(self):
        self.dist.setflags(write=False)

    def value_at(self, x: float, y: float) -> float:
        return float(self.dist[self.world.cell_of(x, y)])

    def values_at(self, pos: np.ndarray) -> np.ndarray:
        ix, iy = self.world.cells_of(pos)
        return self.dist[ix, iy]


def rasterize(world: WorldMap) -> tuple[np.ndarray, np.ndarray]:
    """(passable_mask, opaque_mask) of the already-rasterized map."""
    return world.passable, world.opaque


def line_of_sight(world: WorldMap, a: tuple[float, float], b: tuple[float, float]) -> bool:
    return world.line_of_sight(a, b)


def build_distance_field(world: WorldMap, target: tuple[float, float]) -> DistanceField:
    return world.distance_field(target)


def describe_map(world: WorldMap) -> str:
    return world.describe()


def traverse_cells(ax: float, ay: float, bx: float, by: float) -> Iterable[tuple[int, int]]:
    """Cells crossed by segment a→b (both endpoint cells included).

    Grid walk in the style of Amanatides & Woo.  When the segment passes
    exactly through a cell corner both axes step at once, i.e. the two
    cells merely touched at the corner are not reported.
    """
    ix = int(ax)
    iy = int(ay)
    jx = int(bx)
    jy = int(by)
    dx = bx - ax
    dy = by - ay
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    inf = math.inf
    if dx != 0:
        t_delta_x = abs(1.0 / dx)
        next_vx = (ix + 1) if dx > 0 else ix
        t_max_x = (next_vx - ax) / dx
    else:
        t_delta_x = inf
        t_max_x = inf
    if dy != 0:
        t_delta_y = abs(1.0 / dy)
        next_vy = (iy + 1) if dy > 0 else iy
        t_max_y = (next_vy - ay) / dy
    else:
        t_delta_y = inf
        t_max_y = inf
    # Upper bound on visited cells; guards float-edge infinite loops.
    for _ in range(2 * (abs(jx - ix) + abs(jy - iy)) + 4):
        yield ix, iy
        if ix == jx and iy == jy:
            return
        if t_max_x < t_max_y:
            ix += step_x
            t_max_x += t_delta_x
        elif t_max_y < t_max_x:
            iy += step_y
            t_max_y += t_delta_y
        else:
            ix += step_x
            iy += step_y
            t_max_x += t_delta_x
            t_max_y += t_delta_y
    yield jx, jy


def next_step_direction(field: DistanceField, pos: tuple[float, float]) -> tuple[float, float] | None:
    """Unit vector toward the neighbor cell that shrinks path distance.

    None when the current cell already minimizes distance among legal
    steps, or when the target is unreachable from here.
    """
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
            continue  # no corner cutting
        d = field.dist[jx, jy]
        if d < best:
            best = d
            best_dir = (float(dx), float(dy))
    if best_dir is None:
        return None
    n = math.hypot(*best_dir)
    return (best_dir[0] / n, best_dir[1] / n)


def ascent_directions(field: DistanceField, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vector form of the follow_map away_from step: climb the field.

    Returns (dirs (N,2) unit vectors, valid (N,) bool); rows with
    valid=False have no finite uphill neighbor.
    """
    world = field.world
    ix, iy = world.cells_of(pos)
    here = field.dist[ix, iy]
    best = here.copy()
    best_dx = np.zeros(len(pos))
    best_dy = np.zeros(len(pos))
    for (dx, dy) in NEIGHBOR_OFFSETS:
        jx = ix + int(dx)
        jy = iy + int(dy)
        ok = (jx >= 0) & (jx < world.width) & (jy >= 0) & (jy < world.height)
        jxc = np.clip(jx, 0, world.width - 1)
        jyc = np.clip(jy, 0, world.height - 1)
        if dx != 0 and dy != 0:
            ok &= world.passable[jxc, iy] & world.passable[ix, jyc]
        d = np.where(ok, field.dist[jxc, jyc], -np.inf)
        better = np.isfinite(d) & (d > best)
        best = np.where(better, d, best)
        best_dx = np.where(better, float(dx), best_dx)
        best_dy = np.where(better, float(dy), best_dy)
    valid = np.isfinite(here) & ((best_dx != 0) | (best_dy != 0))
    norm = np.hypot(best_dx, best_dy)
    norm[norm == 0] = 1.0
    dirs = np.stack([best_dx / norm, best_dy / norm], axis=1)
    return dirs, valid


def next_step_directions(field: DistanceField, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vector form of next_step_direction.

    Returns (dirs (N,2) unit vectors, valid (N,) bool); rows with
    valid=False have no downhill step (at target / unreachable).
    """
    world = field.world
    ix, iy = world.cells_of(pos)
    here = field.dist[ix, iy]
    best = here.copy()
    best_dx = np.zeros(len(pos))
    best_dy = np.zeros(len(pos))
    for (dx, dy) in NEIGHBOR_OFFSETS:
        jx = ix + int(dx)
        jy = iy + int(dy)
        ok = (jx >= 0) & (jx < world.width) & (jy >= 0) & (jy < world.height)
        jxc = np.clip(jx, 0, world.width - 1)
        jyc = np.clip(jy, 0, world.height - 1)
        if dx != 0 and dy != 0:
            ok &= world.passable[jxc, iy] & world.passable[ix, jyc]
        d = np.where(ok, field.dist[jxc, jyc], np.inf)
        better = d < best
        best = np.where(better, d, best)
        best_dx = np.where(better, float(dx), best_dx)
        best_dy = np.where(better, float(dy), best_dy)
    valid = np.isfinite(here) & ((best_dx != 0) | (best_dy != 0))
    norm = np.hypot(best_dx, best_dy)
    norm[norm == 0] = 1.0
    dirs = np.stack([best_dx / norm, best_dy / norm], axis=1)
    return dirs, valid
