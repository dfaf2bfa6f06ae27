import { ScribbleGrid } from "./scribble.js";
import { layerColor } from "./palette.js";
import type { BrushState } from "./session.js";
import { el } from "./util.js";

/**
 * Two stacked canvases at map resolution: the base shows the selected
 * channel image, the overlay shows strokes. CSS scales both up; pointer
 * positions map back by nearest neighbor, so one screen stroke lands on
 * exactly the texels the exported PNG will carry.
 */
export class ScribbleView {
  readonly root: HTMLElement;
  private base: HTMLCanvasElement;
  private overlay: HTMLCanvasElement;
  private grid: ScribbleGrid;
  private brush: () => BrushState;
  private drawing = false;
  private last: [number, number] | null = null;
  onStroke: (() => void) | null = null;

  constructor(width: number, height: number, brush: () => BrushState) {
    this.grid = new ScribbleGrid(width, height);
    this.brush = brush;
    this.root = el("div", "scribble-stack");
    this.base = el("canvas", "scribble-base") as HTMLCanvasElement;
    this.overlay = el("canvas", "scribble-overlay") as HTMLCanvasElement;
    for (const c of [this.base, this.overlay]) {
      c.width = width;
      c.height = height;
    }
    this.root.append(this.base, this.overlay);
    this.overlay.addEventListener("pointerdown", (ev) => this.down(ev));
    this.overlay.addEventListener("pointermove", (ev) => this.move(ev));
    window.addEventListener("pointerup", () => this.up());
  }

  get scribbles(): ScribbleGrid {
    return this.grid;
  }

  /** Swap in a fresh grid (node change); keeps canvas sizes. */
  reset(width: number, height: number, mask: Uint8Array | null): void {
    this.grid = new ScribbleGrid(width, height, mask);
    for (const c of [this.base, this.overlay]) {
      c.width = width;
      c.height = height;
    }
    this.redraw();
  }

  setMask(mask: Uint8Array | null): void {
    this.grid.setMask(mask);
    this.redraw();
  }

  async showImage(url: string): Promise<void> {
    const img = new Image();
    img.src = url;
    await img.decode();
    const ctx = this.base.getContext("2d")!;
    ctx.clearRect(0, 0, this.base.width, this.base.height);
    ctx.drawImage(img, 0, 0);
  }

  private toGrid(ev: PointerEvent): [number, number] {
    const rect = this.overlay.getBoundingClientRect();
    const x = Math.floor((ev.clientX - rect.left) * this.grid.width / rect.width);
    const y = Math.floor((ev.clientY - rect.top) * this.grid.height / rect.height);
    return [x, y];
  }

  private down(ev: PointerEvent): void {
    this.drawing = true;
    this.last = this.toGrid(ev);
    this.applyAt(this.last);
  }

  private move(ev: PointerEvent): void {
    if (!this.drawing) return;
    const pt = this.toGrid(ev);
    const b = this.brush();
    const layer = b.erase ? -1 : b.layer;
    if (this.last) {
      if (layer < 0) this.grid.erase(pt[0], pt[1], b.radius);
      else this.grid.stroke(this.last[0], this.last[1], pt[0], pt[1],
                            b.radius, layer);
    }
    this.last = pt;
    this.redraw();
  }

  private applyAt(pt: [number, number]): void {
    const b = this.brush();
    if (b.erase) this.grid.erase(pt[0], pt[1], b.radius);
    else this.grid.paint(pt[0], pt[1], b.radius, b.layer);
    this.redraw();
  }

  private up(): void {
    if (this.drawing) this.onStroke?.();
    this.drawing = false;
    this.last = null;
  }

  clear(): void {
    this.grid.clear();
    this.redraw();
  }

  redraw(): void {
    const ctx = this.overlay.getContext("2d")!;
    const { width, height, labels } = this.grid;
    const img = ctx.createImageData(width, height);
    for (let i = 0; i < labels.length; i++) {
      const v = labels[i];
      if (v < 0) continue;
      const [r, g, b] = layerColor(v);
      img.data[i * 4] = r;
      img.data[i * 4 + 1] = g;
      img.data[i * 4 + 2] = b;
      img.data[i * 4 + 3] = 200;
    }
    ctx.clearRect(0, 0, width, height);
    ctx.putImageData(img, 0, 0);
  }
}
