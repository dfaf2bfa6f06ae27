import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, describe, expect, it } from "vitest";

import {
  decodePng,
  encodeIndexedPng,
  grayValues,
  indexedPixels,
  rgbValues,
} from "../src/png.js";
import { SCRIBBLE_PALETTE } from "../src/palette.js";

const work = mkdtempSync(join(tmpdir(), "png-test-"));
afterAll(() => rmSync(work, { recursive: true, force: true }));

function python(code: string): string {
  return execFileSync("python3", ["-c", code], { encoding: "utf8" });
}

describe("indexed PNG encoder", () => {
  it("round trips through our own decoder", async () => {
    const w = 37;
    const h = 23;
    const pixels = new Uint8Array(w * h);
    for (let i = 0; i < pixels.length; i++) pixels[i] = (i * 7) % 9;
    const bytes = encodeIndexedPng(w, h, pixels, SCRIBBLE_PALETTE);
    const png = await decodePng(bytes);
    expect(png.width).toBe(w);
    expect(png.height).toBe(h);
    expect(png.colorType).toBe(3);
    expect(Array.from(indexedPixels(png))).toEqual(Array.from(pixels));
  });

  it("is byte-deterministic", () => {
    const pixels = new Uint8Array(16 * 16).fill(2);
    const a = encodeIndexedPng(16, 16, pixels, SCRIBBLE_PALETTE);
    const b = encodeIndexedPng(16, 16, pixels, SCRIBBLE_PALETTE);
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
  });

  it("is readable by the server's image stack with exact pixels", () => {
    const w = 41;
    const h = 17;
    const pixels = new Uint8Array(w * h);
    for (let i = 0; i < pixels.length; i++) pixels[i] = (i * 13) % 8;
    const file = join(work, "ours.png");
    writeFileSync(file, encodeIndexedPng(w, h, pixels, SCRIBBLE_PALETTE));
    const out = python(`
from PIL import Image
import numpy as np
img = Image.open(${JSON.stringify(file)})
arr = np.asarray(img)
print(img.mode, img.size[0], img.size[1], int(arr.sum()), arr.tobytes().hex())
`).trim().split(" ");
    expect(out[0]).toBe("P");
    expect(Number(out[1])).toBe(w);
    expect(Number(out[2])).toBe(h);
    const decoded = Buffer.from(out[4], "hex");
    expect(decoded.equals(Buffer.from(pixels))).toBe(true);
  });

  it("rejects a size mismatch", () => {
    expect(() => encodeIndexedPng(4, 4, new Uint8Array(3), SCRIBBLE_PALETTE))
      .toThrow(/pixel count/);
  });
});

describe("PNG decoder", () => {
  it("reads a filtered grayscale PNG written by the server stack", async () => {
    const file = join(work, "gray.png");
    python(`
from PIL import Image
import numpy as np
h, w = 29, 31
arr = ((np.arange(h)[:, None] * 5 + np.arange(w)[None, :] * 3) % 256).astype(np.uint8)
Image.fromarray(arr).save(${JSON.stringify(file)})
`);
    const png = await decodePng(new Uint8Array(readFileSync(file)));
    expect(png.colorType).toBe(0);
    const vals = grayValues(png);
    expect(vals.length).toBe(29 * 31);
    const v = (y: number, x: number) => ((y * 5 + x * 3) % 256) / 255;
    expect(vals[0]).toBeCloseTo(v(0, 0), 6);
    expect(vals[5 * 31 + 7]).toBeCloseTo(v(5, 7), 6);
    expect(vals[28 * 31 + 30]).toBeCloseTo(v(28, 30), 6);
  });

  it("reads 16-bit grayscale at full precision", async () => {
    const file = join(work, "gray16.png");
    python(`
from PIL import Image
import numpy as np
arr = (np.arange(64, dtype=np.uint32).reshape(8, 8) * 1000 % 65536).astype(np.uint16)
Image.fromarray(arr).save(${JSON.stringify(file)})
`);
    const png = await decodePng(new Uint8Array(readFileSync(file)));
    expect(png.bitDepth).toBe(16);
    const vals = grayValues(png);
    expect(vals[13]).toBeCloseTo((13000 % 65536) / 65535, 9);
    expect(vals[63]).toBeCloseTo((63000 % 65536) / 65535, 9);
  });

  it("reads RGB with every scanline filter PIL chooses", async () => {
    const file = join(work, "rgb.png");
    python(`
from PIL import Image
import numpy as np
rng = np.random.default_rng(11)
arr = rng.integers(0, 256, size=(40, 33, 3), dtype=np.uint8)
Image.fromarray(arr).save(${JSON.stringify(file)})
np.save(${JSON.stringify(join(work, "rgb.npy"))}, arr)
`);
    const png = await decodePng(new Uint8Array(readFileSync(file)));
    const rgb = rgbValues(png);
    const ref = python(`
import numpy as np
print(np.load(${JSON.stringify(join(work, "rgb.npy"))}).tobytes().hex())
`).trim();
    expect(Buffer.from(rgb).toString("hex")).toBe(ref);
  });

  it("refuses non-PNG bytes", async () => {
    await expect(decodePng(new Uint8Array([1, 2, 3, 4, 5, 6, 7, 8])))
      .rejects.toThrow(/not a PNG/);
  });
});
