/** Client-side overlay compositing onto raw RGBA buffers.
 *
 * Pure array math (no canvas API) so the exact pixels are unit-testable;
 * main.ts blits the result into the canvas via ImageData.
 */

import { fieldVec, type FieldData } from "./dkf1.js";
import type { PnmImage } from "./pnm.js";
import type { PairPx } from "./types.js";

export const SRC_TINT: [number, number, number] = [255, 160, 0];
export const DST_TINT: [number, number, number] = [0, 200, 255];
export const ARROW_COLOR: [number, number, number] = [255, 255, 0];
export const SOURCE_POINT: [number, number, number] = [255, 0, 0];
export const TARGET_POINT: [number, number, number] = [0, 0, 255];
export const POINT_RADIUS = 4;
export const ARROW_STRIDE = 2; // at most one arrow per 2x2 token cells

export interface OverlayInput {
  width: number;
  height: number;
  base: Uint8ClampedArray; // RGBA, mutated copy is returned
  f: number;
  gridW: number;
  gridH: number;
  paintMask?: Uint8Array | null; // pixel-level painted source mask (0/255)
  dstCells?: Uint8Array | null; // token-level destination cells (0/1)
  srcCells?: Uint8Array | null; // token-level source cells (0/1)
  field?: FieldData | null;
  pairs?: PairPx[];
  preview?: PnmImage | null; // replaces the base when present
}

function tintPixel(out: Uint8ClampedArray, idx: number, color: [number, number, number]): void {
  out[idx] = (2 * out[idx] + color[0]) / 3;
  out[idx + 1] = (2 * out[idx + 1] + color[1]) / 3;
  out[idx + 2] = (2 * out[idx + 2] + color[2]) / 3;
}

function setPixel(
  out: Uint8ClampedArray,
  width: number,
  height: number,
  x: number,
  y: number,
  color: [number, number, number],
): void {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const idx = (y * width + x) * 4;
  out[idx] = color[0];
  out[idx + 1] = color[1];
  out[idx + 2] = color[2];
  out[idx + 3] = 255;
}

function drawDisc(
  out: Uint8ClampedArray,
  width: number,
  height: number,
  cx: number,
  cy: number,
  radius: number,
  color: [number, number, number],
): void {
  for (let y = Math.floor(cy - radius); y <= Math.ceil(cy + radius); y++) {
    for (let x = Math.floor(cx - radius); x <= Math.ceil(cx + radius); x++) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius) {
        setPixel(out, width, height, x, y, color);
      }
    }
  }
}

function drawLine(
  out: Uint8ClampedArray,
  width: number,
  height: number,
  x0: number,
  y0: number,
  x1: number,
  y1: number,
  color: [number, number, number],
): void {
  const dx = Math.abs(x1 - x0);
  const dy = -Math.abs(y1 - y0);
  const sx = x0 < x1 ? 1 : -1;
  const sy = y0 < y1 ? 1 : -1;
  let err = dx + dy;
  for (;;) {
    setPixel(out, width, height, x0, y0, color);
    if (x0 === x1 && y0 === y1) return;
    const e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

/** Tint every pixel covered by the set token cells. */
export function tintCells(
  out: Uint8ClampedArray,
  width: number,
  height: number,
  cells: Uint8Array,
  gridW: number,
  gridH: number,
  f: number,
  color: [number, number, number],
): void {
  for (let cy = 0; cy < gridH; cy++) {
    for (let cx = 0; cx < gridW; cx++) {
      if (!cells[cy * gridW + cx]) continue;
      const yEnd = Math.min((cy + 1) * f, height);
      const xEnd = Math.min((cx + 1) * f, width);
      for (let y = cy * f; y < yEnd; y++) {
        for (let x = cx * f; x < xEnd; x++) {
          tintPixel(out, (y * width + x) * 4, color);
        }
      }
    }
  }
}

/** Pixel coverage of a token-cell set, for congruence checks. */
export function cellCoverage(
  cells: Uint8Array,
  gridW: number,
  gridH: number,
  f: number,
  width: number,
  height: number,
): Uint8Array {
  const cover = new Uint8Array(width * height);
  for (let cy = 0; cy < gridH; cy++) {
    for (let cx = 0; cx < gridW; cx++) {
      if (!cells[cy * gridW + cx]) continue;
      const yEnd = Math.min((cy + 1) * f, height);
      const xEnd = Math.min((cx + 1) * f, width);
      for (let y = cy * f; y < yEnd; y++) {
        cover.fill(1, y * width + cx * f, y * width + xEnd);
      }
    }
  }
  return cover;
}

export function composite(input: OverlayInput): Uint8ClampedArray<ArrayBuffer> {
  const { width, height, f, gridW, gridH } = input;
  const out = new Uint8ClampedArray(input.base.length);
  out.set(input.base);
  if (input.preview) {
    const { channels, data } = input.preview;
    for (let i = 0; i < width * height; i++) {
      const src = i * channels;
      out[i * 4] = data[src];
      out[i * 4 + 1] = data[channels === 3 ? src + 1 : src];
      out[i * 4 + 2] = data[channels === 3 ? src + 2 : src];
      out[i * 4 + 3] = 255;
    }
  }
  if (input.paintMask) {
    for (let i = 0; i < width * height; i++) {
      if (input.paintMask[i] >= 128) tintPixel(out, i * 4, SRC_TINT);
    }
  }
  if (input.srcCells) {
    tintCells(out, width, height, input.srcCells, gridW, gridH, f, SRC_TINT);
  }
  if (input.dstCells) {
    tintCells(out, width, height, input.dstCells, gridW, gridH, f, DST_TINT);
  }
  if (input.field) {
    for (let cy = 0; cy < gridH; cy += ARROW_STRIDE) {
      for (let cx = 0; cx < gridW; cx += ARROW_STRIDE) {
        const [dx, dy] = fieldVec(input.field, cx, cy);
        if (dx === 0 && dy === 0) continue;
        const x0 = Math.round((cx + 0.5) * f);
        const y0 = Math.round((cy + 0.5) * f);
        const x1 = Math.round((cx + dx + 0.5) * f);
        const y1 = Math.round((cy + dy + 0.5) * f);
        drawLine(out, width, height, x0, y0, x1, y1, ARROW_COLOR);
        drawDisc(out, width, height, x1, y1, 1.5, ARROW_COLOR);
      }
    }
  }
  for (const pair of input.pairs ?? []) {
    drawDisc(out, width, height, pair.source[0], pair.source[1], POINT_RADIUS, SOURCE_POINT);
  }
  for (const pair of input.pairs ?? []) {
    drawDisc(out, width, height, pair.target[0], pair.target[1], POINT_RADIUS, TARGET_POINT);
  }
  return out;
}

/** How many distinct arrows a field would draw (decimation check). */
export function arrowAnchors(field: FieldData): Array<[number, number]> {
  const anchors: Array<[number, number]> = [];
  for (let cy = 0; cy < field.height; cy += ARROW_STRIDE) {
    for (let cx = 0; cx < field.width; cx += ARROW_STRIDE) {
      const [dx, dy] = fieldVec(field, cx, cy);
      if (dx !== 0 || dy !== 0) anchors.push([cx, cy]);
    }
  }
  return anchors;
}
