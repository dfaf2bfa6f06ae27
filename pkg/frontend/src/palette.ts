import type { Rgb } from "./png.js";

/**
 * Scribble file palette shared with the server: index 0 is unlabeled,
 * index k colors layer k-1. Must stay in sync with the server's reader,
 * which maps pixel value v to label v-1.
 */
export const SCRIBBLE_PALETTE: Rgb[] = [
  [0, 0, 0],
  [230, 60, 60],
  [70, 140, 230],
  [90, 190, 90],
  [235, 200, 70],
  [190, 100, 220],
  [90, 210, 210],
  [240, 140, 60],
  [150, 150, 150],
];

export const MAX_LAYERS = SCRIBBLE_PALETTE.length - 1;

export function layerColor(layer: number): Rgb {
  return SCRIBBLE_PALETTE[1 + (layer % MAX_LAYERS)];
}
