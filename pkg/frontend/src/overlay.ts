/**
 * Pure RGBA compositing over plain pixel buffers.
 *
 * Everything here operates on Raster objects rather than canvas contexts so
 * overlay behavior is testable without a browser; main.ts copies the result
 * into an ImageData for display.
 */

import type { Box } from "./api.js";

export interface Raster {
  width: number;
  height: number;
  /** RGBA, row-major, 4 bytes per pixel. */
  data: Uint8ClampedArray;
}

export type Rgba = readonly [number, number, number, number];

export const BOX_COLOR: Rgba = [255, 210, 40, 255];
export const FUSED_COLOR: Rgba = [60, 190, 255, 110];
export const GROUND_TRUTH_COLOR: Rgba = [70, 220, 110, 130];
export const PROPOSAL_COLOR: Rgba = [255, 80, 80, 255];

export function createRaster(width: number, height: number): Raster {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

export function cloneRaster(raster: Raster): Raster {
  return { width: raster.width, height: raster.height, data: raster.data.slice() };
}

/** Grayscale image bytes to an opaque RGBA raster. */
export function grayToRaster(gray: Uint8Array, width: number, height: number): Raster {
  const raster = createRaster(width, height);
  for (let i = 0; i < width * height; i++) {
    const v = gray[i]!;
    raster.data[i * 4] = v;
    raster.data[i * 4 + 1] = v;
    raster.data[i * 4 + 2] = v;
    raster.data[i * 4 + 3] = 255;
  }
  return raster;
}

function blendPixel(raster: Raster, idx: number, color: Rgba): void {
  const a = color[3] / 255;
  const base = idx * 4;
  raster.data[base] = color[0] * a + raster.data[base]! * (1 - a);
  raster.data[base + 1] = color[1] * a + raster.data[base + 1]! * (1 - a);
  raster.data[base + 2] = color[2] * a + raster.data[base + 2]! * (1 - a);
  raster.data[base + 3] = Math.max(raster.data[base + 3]!, color[3]);
}

/** Source-over blend of a 0/1 mask in the given color. */
export function fillMask(raster: Raster, mask: Uint8Array, color: Rgba): void {
  const n = raster.width * raster.height;
  if (mask.length !== n) {
    throw new Error(`mask has ${mask.length} pixels, raster has ${n}`);
  }
  for (let i = 0; i < n; i++) {
    if (mask[i]) blendPixel(raster, i, color);
  }
}

/** Rectangle outline of the given stroke width, clipped to the raster. */
export function outlineBox(raster: Raster, box: Box, color: Rgba, thickness = 1): void {
  const { width, height } = raster;
  const x0 = box.x;
  const y0 = box.y;
  const x1 = box.x + box.w;
  const y1 = box.y + box.h;
  for (let y = Math.max(y0, 0); y < Math.min(y1, height); y++) {
    for (let x = Math.max(x0, 0); x < Math.min(x1, width); x++) {
      const onEdge =
        x - x0 < thickness || x1 - 1 - x < thickness ||
        y - y0 < thickness || y1 - 1 - y < thickness;
      if (onEdge) blendPixel(raster, y * width + x, color);
    }
  }
}

/** Pixels set in the mask with at least one unset 4-neighbor (frame borders
 * count as unset, so a mask touching the edge still gets an outline). */
export function maskBoundary(mask: Uint8Array, width: number, height: number): Uint8Array {
  const out = new Uint8Array(mask.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = y * width + x;
      if (!mask[i]) continue;
      const open =
        x === 0 || x === width - 1 || y === 0 || y === height - 1 ||
        !mask[i - 1] || !mask[i + 1] || !mask[i - width] || !mask[i + width];
      if (open) out[i] = 1;
    }
  }
  return out;
}

export function outlineMask(raster: Raster, mask: Uint8Array, color: Rgba): void {
  fillMask(raster, maskBoundary(mask, raster.width, raster.height), color);
}

/** Union of box interiors as a 0/1 buffer, boxes clipped to the frame. */
export function boxesToMask(boxes: Box[], width: number, height: number): Uint8Array {
  const mask = new Uint8Array(width * height);
  for (const box of boxes) {
    const x0 = Math.max(box.x, 0);
    const y0 = Math.max(box.y, 0);
    const x1 = Math.min(box.x + box.w, width);
    const y1 = Math.min(box.y + box.h, height);
    for (let y = y0; y < y1; y++) {
      mask.fill(1, y * width + x0, y * width + x1);
    }
  }
  return mask;
}

/** 0/1 per pixel: does any RGBA channel differ between the two rasters? */
export function changedPixels(before: Raster, after: Raster): Uint8Array {
  if (before.width !== after.width || before.height !== after.height) {
    throw new Error("raster dimensions differ");
  }
  const n = before.width * before.height;
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    for (let c = 0; c < 4; c++) {
      if (before.data[i * 4 + c] !== after.data[i * 4 + c]) {
        out[i] = 1;
        break;
      }
    }
  }
  return out;
}

export interface OverlayInputs {
  mode: "boxes" | "fused_mask" | "proposals" | "ground_truth";
  boxes?: Box[];
  groundTruth?: Uint8Array;
  proposalMask?: Uint8Array;
}

/** Frame plus the overlay for the current mode, as a new raster. */
export function composeView(base: Raster, inputs: OverlayInputs): Raster {
  const view = cloneRaster(base);
  const boxes = inputs.boxes ?? [];
  switch (inputs.mode) {
    case "boxes":
      for (const box of boxes) outlineBox(view, box, BOX_COLOR);
      break;
    case "fused_mask":
      fillMask(view, boxesToMask(boxes, view.width, view.height), FUSED_COLOR);
      break;
    case "proposals":
      if (inputs.proposalMask) outlineMask(view, inputs.proposalMask, PROPOSAL_COLOR);
      break;
    case "ground_truth":
      if (inputs.groundTruth) fillMask(view, inputs.groundTruth, GROUND_TRUTH_COLOR);
      break;
  }
  return view;
}
