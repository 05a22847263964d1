/** Canvas drawing: terrain from feature shapes, units as team-colored glyphs.
 *
 * Every function takes a duck-typed 2D context so tests can pass a stub and
 * count operations instead of standing up a real canvas.
 */

import type { FrameUnit, MapDoc, MarkerDoc, UnitTypeInfo } from "./api.js";
import type { Viewport } from "./view.js";

/** The subset of CanvasRenderingContext2D the renderer needs. */
export interface Ctx2D {
  fillStyle: string;
  strokeStyle: string;
  lineWidth: number;
  font: string;
  textAlign: string;
  textBaseline: string;
  fillRect(x: number, y: number, w: number, h: number): void;
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

export const TEAM_COLORS: Record<"ally" | "enemy", string> = {
  ally: "#2563eb", // blue
  enemy: "#dc2626", // red
};

export const TERRAIN_KINDS = ["normal", "trees", "water", "buildings"] as const;
export type TerrainName = (typeof TERRAIN_KINDS)[number];

export const TERRAIN_COLORS: Record<TerrainName, string> = {
  normal: "#ece5d0",
  trees: "#49703f",
  water: "#3c6fa3",
  buildings: "#6d675e",
};

/**
 * Paint features onto a kind grid exactly the way the server does: a cell
 * belongs to a shape when its center does — rects are closed boxes, circles
 * closed discs — and later shapes repaint earlier ones.
 */
export function rasterizeMap(map: MapDoc): Uint8Array {
  const grid = new Uint8Array(map.width * map.height); // kind code, row-major by y
  for (const feature of map.features) {
    const code = TERRAIN_KINDS.indexOf(feature.kind as TerrainName);
    if (code < 0) {
      continue;
    }
    for (const shape of feature.shapes) {
      if (shape.rect) {
        const [x1, y1, x2, y2] = shape.rect;
        for (let iy = 0; iy < map.height; iy++) {
          if (iy + 0.5 < y1 || iy + 0.5 > y2) continue;
          for (let ix = 0; ix < map.width; ix++) {
            if (ix + 0.5 < x1 || ix + 0.5 > x2) continue;
            grid[iy * map.width + ix] = code;
          }
        }
      } else if (shape.circle) {
        const [cx, cy, r] = shape.circle;
        for (let iy = 0; iy < map.height; iy++) {
          const dy = iy + 0.5 - cy;
          for (let ix = 0; ix < map.width; ix++) {
            const dx = ix + 0.5 - cx;
            if (dx * dx + dy * dy <= r * r) {
              grid[iy * map.width + ix] = code;
            }
          }
        }
      }
    }
  }
  return grid;
}

export function drawTerrain(ctx: Ctx2D, map: MapDoc, vp: Viewport): void {
  ctx.fillStyle = TERRAIN_COLORS.normal;
  const [left, bottom] = vp.toScreen(0, 0);
  const [right, top] = vp.toScreen(map.width, map.height);
  ctx.fillRect(left, top, right - left, bottom - top);

  const grid = rasterizeMap(map);
  const cell = vp.scale;
  for (let iy = 0; iy < map.height; iy++) {
    for (let ix = 0; ix < map.width; ix++) {
      const code = grid[iy * map.width + ix];
      if (code === 0) continue;
      ctx.fillStyle = TERRAIN_COLORS[TERRAIN_KINDS[code]];
      const [sx, sy] = vp.toScreen(ix, iy + 1);
      ctx.fillRect(sx, sy, cell + 0.5, cell + 0.5);
    }
  }
}

/**
 * One unit, one glyph: spearmen draw as squares, archers as circles, cavalry
 * as triangles; allies blue, enemies red. Unknown types fall back to squares.
 */
export function drawUnits(
  ctx: Ctx2D,
  units: FrameUnit[],
  vp: Viewport,
  unitTypes: Record<string, UnitTypeInfo>,
): void {
  const size = Math.max(2.5, vp.scale * 0.9);
  const half = size / 2;
  for (const unit of units) {
    ctx.fillStyle = TEAM_COLORS[unit.team];
    const [sx, sy] = vp.toScreen(unit.x, unit.y);
    const glyph = unitTypes[unit.type]?.glyph ?? "square";
    if (glyph === "circle") {
      ctx.beginPath();
      ctx.arc(sx, sy, half, 0, Math.PI * 2);
      ctx.fill();
    } else if (glyph === "triangle") {
      ctx.beginPath();
      ctx.moveTo(sx, sy - half);
      ctx.lineTo(sx - half, sy + half);
      ctx.lineTo(sx + half, sy + half);
      ctx.closePath();
      ctx.fill();
    } else {
      ctx.fillRect(sx - half, sy - half, size, size);
    }
  }
}

export function drawMarkers(ctx: Ctx2D, markers: MarkerDoc[], vp: Viewport): void {
  for (const marker of markers) {
    const [sx, sy] = vp.toScreen(marker.x, marker.y);
    ctx.strokeStyle = "#111111";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.arc(sx, sy, 7, 0, Math.PI * 2);
    ctx.stroke();
    ctx.fillStyle = "#111111";
    ctx.font = "bold 11px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(marker.label, sx, sy);
  }
}

export interface SceneDoc {
  map: MapDoc;
  markers: MarkerDoc[];
  unit_types: Record<string, UnitTypeInfo>;
}

/** Full frame: terrain, then units, then marker overlays. */
export function drawScene(
  ctx: Ctx2D,
  scene: SceneDoc,
  units: FrameUnit[],
  vp: Viewport,
): void {
  ctx.clearRect(0, 0, vp.screenWidth, vp.screenHeight);
  drawTerrain(ctx, scene.map, vp);
  drawUnits(ctx, units, vp, scene.unit_types);
  drawMarkers(ctx, scene.markers, vp);
}
