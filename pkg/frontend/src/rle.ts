/** Row-major run-length mask decoding, as the edit service serves it. */

import type { MaskRle } from "./types.js";

export function decodeRle(rle: MaskRle): Uint8Array {
  const cells = new Uint8Array(rle.width * rle.height);
  for (const [start, length] of rle.runs) {
    if (start < 0 || start + length > cells.length) {
      throw new Error(`run [${start}, ${length}] outside ${cells.length} cells`);
    }
    cells.fill(1, start, start + length);
  }
  return cells;
}

export function rleEqual(a: MaskRle, b: MaskRle): boolean {
  return (
    a.width === b.width &&
    a.height === b.height &&
    a.runs.length === b.runs.length &&
    a.runs.every(([s, l], i) => b.runs[i][0] === s && b.runs[i][1] === l)
  );
}

export function cellCount(rle: MaskRle): number {
  return rle.runs.reduce((acc, [, l]) => acc + l, 0);
}
