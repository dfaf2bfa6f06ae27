import { describe, expect, it } from "vitest";

import { decodePng, indexedPixels } from "../src/png.js";
import { ScribbleGrid } from "../src/scribble.js";

function fullMask(w: number, h: number): Uint8Array {
  return new Uint8Array(w * h).fill(1);
}

describe("ScribbleGrid", () => {
  it("starts empty and reports it", () => {
    const g = new ScribbleGrid(16, 16);
    expect(g.isEmpty()).toBe(true);
    expect(g.layerCounts().size).toBe(0);
  });

  it("paints a round stamp of the requested layer", () => {
    const g = new ScribbleGrid(21, 21);
    g.paint(10, 10, 3, 1);
    expect(g.labels[10 * 21 + 10]).toBe(1);
    expect(g.labels[10 * 21 + 13]).toBe(1); // on the radius
    expect(g.labels[10 * 21 + 14]).toBe(-1); // beyond it
    expect(g.labels[0]).toBe(-1);
    expect(g.isEmpty()).toBe(false);
  });

  it("export carries palette indices layer+1 for every painted layer", async () => {
    const g = new ScribbleGrid(32, 32);
    g.paint(8, 8, 4, 0);
    g.paint(24, 24, 4, 1);
    const png = await decodePng(g.toPng());
    const seen = new Set(indexedPixels(png));
    expect(seen.has(1)).toBe(true);
    expect(seen.has(2)).toBe(true);
    expect(seen.has(0)).toBe(true); // unlabeled background
    expect([...seen].every((v) => v <= 2)).toBe(true);
  });

  it("clips strokes to the node mask at paint time", () => {
    const w = 20;
    const h = 20;
    const mask = new Uint8Array(w * h);
    // left half only
    for (let y = 0; y < h; y++) {
      for (let x = 0; x < w / 2; x++) mask[y * w + x] = 1;
    }
    const g = new ScribbleGrid(w, h, mask);
    g.stroke(2, 10, 18, 10, 2, 0); // crosses into the masked-out half
    expect(g.outOfMaskCount()).toBe(0);
    expect(g.labels[10 * w + 4]).toBe(0);
    expect(g.labels[10 * w + 15]).toBe(-1);
  });

  it("erase removes labels but ignores the mask", () => {
    const g = new ScribbleGrid(16, 16, fullMask(16, 16));
    g.paint(8, 8, 3, 2);
    g.erase(8, 8, 1);
    expect(g.labels[8 * 16 + 8]).toBe(-1);
    expect(g.labels[8 * 16 + 11]).toBe(2);
  });

  it("attaching a mask afterwards drops labels outside it", () => {
    const g = new ScribbleGrid(8, 8);
    g.paint(1, 1, 1, 0);
    g.paint(6, 6, 1, 1);
    const mask = new Uint8Array(64);
    for (let i = 0; i < 32; i++) mask[i] = 1; // top half
    g.setMask(mask);
    expect(g.outOfMaskCount()).toBe(0);
    expect(g.layerCounts().has(1)).toBe(false);
    expect(g.layerCounts().has(0)).toBe(true);
  });

  it("round trips through PNG bytes", async () => {
    const g = new ScribbleGrid(24, 24);
    g.stroke(2, 3, 20, 17, 2, 0);
    g.stroke(20, 3, 2, 17, 2, 3);
    const back = await ScribbleGrid.fromPng(g.toPng());
    expect(Array.from(back.labels)).toEqual(Array.from(g.labels));
  });

  it("fromPng applies a mask like live painting would", async () => {
    const g = new ScribbleGrid(10, 10);
    g.paint(2, 2, 1, 0);
    g.paint(8, 8, 1, 1);
    const mask = new Uint8Array(100);
    for (let i = 0; i < 50; i++) mask[i] = 1;
    const back = await ScribbleGrid.fromPng(g.toPng(), mask);
    expect(back.outOfMaskCount()).toBe(0);
    expect(back.layerCounts().has(1)).toBe(false);
  });

  it("clear empties the grid", () => {
    const g = new ScribbleGrid(8, 8);
    g.paint(4, 4, 2, 1);
    g.clear();
    expect(g.isEmpty()).toBe(true);
  });
});
