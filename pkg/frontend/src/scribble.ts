import { decodePng, encodeIndexedPng, indexedPixels } from "./png.js";
import { SCRIBBLE_PALETTE } from "./palette.js";

/**
 * The label grid behind the scribble canvas. Strokes live at map
 * resolution, never screen resolution: the canvas view may scale the
 * grid up for display, but every painted pixel is one map texel, so the
 * PNG sent to the server matches what the screen shows pixel for pixel.
 *
 * A node mask can be attached; painting is then clipped to it at write
 * time, which keeps the invariant that an export never carries labels
 * outside the selected node's region.
 */
export class ScribbleGrid {
  readonly width: number;
  readonly height: number;
  /** -1 unlabeled, else layer index. */
  readonly labels: Int16Array;
  private mask: Uint8Array | null;

  constructor(width: number, height: number, mask?: Uint8Array | null) {
    if (mask && mask.length !== width * height) {
      throw new Error(`mask length ${mask.length} != ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.labels = new Int16Array(width * height).fill(-1);
    this.mask = mask ?? null;
  }

  private stamp(cx: number, cy: number, radius: number, value: number): void {
    const r = Math.max(0, radius);
    const r2 = r * r;
    const x0 = Math.max(0, Math.ceil(cx - r));
    const x1 = Math.min(this.width - 1, Math.floor(cx + r));
    const y0 = Math.max(0, Math.ceil(cy - r));
    const y1 = Math.min(this.height - 1, Math.floor(cy + r));
    for (let y = y0; y <= y1; y++) {
      const dy = y - cy;
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        if (dx * dx + dy * dy > r2) continue;
        const i = y * this.width + x;
        if (value >= 0 && this.mask && !this.mask[i]) continue;
        this.labels[i] = value;
      }
    }
  }

  /** Paint a round brush stamp for one layer, clipped to the mask. */
  paint(cx: number, cy: number, radius: number, layer: number): void {
    if (layer < 0) throw new Error("layer must be >= 0");
    this.stamp(cx, cy, radius, layer);
  }

  /** A stroke segment: stamps along the line so fast drags stay solid. */
  stroke(x0: number, y0: number, x1: number, y1: number,
         radius: number, layer: number): void {
    const steps = Math.max(1, Math.ceil(Math.hypot(x1 - x0, y1 - y0)));
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      this.stamp(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius, layer);
    }
  }

  erase(cx: number, cy: number, radius: number): void {
    this.stamp(cx, cy, radius, -1);
  }

  clear(): void {
    this.labels.fill(-1);
  }

  isEmpty(): boolean {
    for (let i = 0; i < this.labels.length; i++) {
      if (this.labels[i] >= 0) return false;
    }
    return true;
  }

  /** Pixels labeled per layer, for the brush legend. */
  layerCounts(): Map<number, number> {
    const counts = new Map<number, number>();
    for (let i = 0; i < this.labels.length; i++) {
      const v = this.labels[i];
      if (v >= 0) counts.set(v, (counts.get(v) ?? 0) + 1);
    }
    return counts;
  }

  /** Labeled pixels outside the mask; 0 by construction while painting. */
  outOfMaskCount(): number {
    if (!this.mask) return 0;
    let n = 0;
    for (let i = 0; i < this.labels.length; i++) {
      if (this.labels[i] >= 0 && !this.mask[i]) n++;
    }
    return n;
  }

  setMask(mask: Uint8Array | null): void {
    if (mask && mask.length !== this.width * this.height) {
      throw new Error("mask does not match grid size");
    }
    this.mask = mask;
    if (mask) {
      for (let i = 0; i < this.labels.length; i++) {
        if (!mask[i]) this.labels[i] = -1;
      }
    }
  }

  /** Export as the server's indexed PNG format (pixel = label + 1). */
  toPng(): Uint8Array {
    const pixels = new Uint8Array(this.labels.length);
    for (let i = 0; i < this.labels.length; i++) {
      pixels[i] = this.labels[i] + 1;
    }
    return encodeIndexedPng(this.width, this.height, pixels, SCRIBBLE_PALETTE);
  }

  static async fromPng(bytes: Uint8Array,
                       mask?: Uint8Array | null): Promise<ScribbleGrid> {
    const png = await decodePng(bytes);
    const grid = new ScribbleGrid(png.width, png.height, mask);
    const pixels = indexedPixels(png);
    for (let i = 0; i < pixels.length; i++) {
      const label = pixels[i] - 1;
      if (label >= 0 && mask && !mask[i]) continue;
      grid.labels[i] = label;
    }
    return grid;
  }
}
