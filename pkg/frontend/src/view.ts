/** World-to-screen mapping: meters (y up) to canvas pixels (y down). */

export class Viewport {
  readonly scale: number;
  readonly offsetX: number;
  readonly offsetY: number;

  constructor(
    readonly worldWidth: number,
    readonly worldHeight: number,
    readonly screenWidth: number,
    readonly screenHeight: number,
  ) {
    this.scale = Math.min(screenWidth / worldWidth, screenHeight / worldHeight);
    this.offsetX = (screenWidth - worldWidth * this.scale) / 2;
    this.offsetY = (screenHeight - worldHeight * this.scale) / 2;
  }

  toScreen(wx: number, wy: number): [number, number] {
    return [
      this.offsetX + wx * this.scale,
      this.offsetY + (this.worldHeight - wy) * this.scale,
    ];
  }

  toWorld(sx: number, sy: number): [number, number] {
    return [
      (sx - this.offsetX) / this.scale,
      this.worldHeight - (sy - this.offsetY) / this.scale,
    ];
  }

  /**
   * A click becomes a whole-meter coordinate, clamped into the map, ready to
   * send as a marker. Clicking the spot where world (11, 9) is drawn yields
   * exactly {x: 11, y: 9}.
   */
  worldClick(sx: number, sy: number): { x: number; y: number } {
    const [wx, wy] = this.toWorld(sx, sy);
    const clamp = (v: number, hi: number) => Math.min(Math.max(v, 0), hi);
    return {
      x: clamp(Math.round(wx), this.worldWidth - 1),
      y: clamp(Math.round(wy), this.worldHeight - 1),
    };
  }
}
