/** Canvas-side editing state and its lossless mapping to drag-spec JSON.
 *
 * The state is the single source of truth for what the user authored; the
 * spec document it serializes to is exactly what the service receives. No
 * drag math happens here — every computed overlay comes from the server.
 */

import { dataUrlToPnm, maskToDataUrl } from "./pnm.js";
import type { DragSpecDoc, OverlayToggles, PairPx, PointPx } from "./types.js";

export interface CanvasState {
  imageWidth: number;
  imageHeight: number;
  downscale: number;
  pairs: PairPx[];
  selectedPair: number; // -1 = none
  mask: Uint8Array; // pixel mask, 0 or 255, length w*h
  brushRadius: number;
  toggles: OverlayToggles;
  sessionId: string | null;
}

export function newState(imageWidth: number, imageHeight: number, downscale = 16): CanvasState {
  return {
    imageWidth,
    imageHeight,
    downscale,
    pairs: [],
    selectedPair: -1,
    mask: new Uint8Array(imageWidth * imageHeight),
    brushRadius: 12,
    toggles: { srcMask: true, dstMask: true, field: true, preview: false },
    sessionId: null,
  };
}

function clampPoint(state: CanvasState, p: PointPx): PointPx {
  return [
    Math.min(Math.max(p[0], 0), state.imageWidth),
    Math.min(Math.max(p[1], 0), state.imageHeight),
  ];
}

export function addPair(state: CanvasState, source: PointPx, target: PointPx): number {
  state.pairs.push({ source: clampPoint(state, source), target: clampPoint(state, target) });
  state.selectedPair = state.pairs.length - 1;
  return state.selectedPair;
}

export function deletePair(state: CanvasState, index: number): void {
  if (index < 0 || index >= state.pairs.length) return;
  state.pairs.splice(index, 1);
  if (state.selectedPair >= state.pairs.length) state.selectedPair = state.pairs.length - 1;
}

export function movePairEndpoint(
  state: CanvasState,
  index: number,
  which: "source" | "target",
  to: PointPx,
): void {
  const pair = state.pairs[index];
  if (!pair) return;
  pair[which] = clampPoint(state, to);
}

export interface EndpointHit {
  index: number;
  which: "source" | "target";
}

export function hitTestEndpoint(state: CanvasState, p: PointPx, tol = 8): EndpointHit | null {
  let best: EndpointHit | null = null;
  let bestDist = tol;
  state.pairs.forEach((pair, index) => {
    for (const which of ["source", "target"] as const) {
      const [x, y] = pair[which];
      const d = Math.hypot(x - p[0], y - p[1]);
      if (d <= bestDist) {
        best = { index, which };
        bestDist = d;
      }
    }
  });
  return best;
}

/** Paint (or erase) a filled disc on the pixel mask. */
export function paintBrush(
  state: CanvasState,
  cx: number,
  cy: number,
  radius: number,
  erase = false,
): void {
  const value = erase ? 0 : 255;
  const r = Math.max(1, Math.round(radius));
  const x0 = Math.max(0, Math.floor(cx - r));
  const x1 = Math.min(state.imageWidth - 1, Math.ceil(cx + r));
  const y0 = Math.max(0, Math.floor(cy - r));
  const y1 = Math.min(state.imageHeight - 1, Math.ceil(cy + r));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) {
        state.mask[y * state.imageWidth + x] = value;
      }
    }
  }
}

export function clearMask(state: CanvasState): void {
  state.mask.fill(0);
}

/** Pre-submission validation mirroring the server's 422 codes. */
export function validate(state: CanvasState): string[] {
  const problems: string[] = [];
  if (state.pairs.length === 0) problems.push("pairs non-empty");
  if (!state.mask.some((v) => v >= 128)) problems.push("source mask is empty");
  for (let i = 0; i < state.pairs.length; i++) {
    for (let j = i + 1; j < state.pairs.length; j++) {
      const a = state.pairs[i];
      const b = state.pairs[j];
      const sameSource = a.source[0] === b.source[0] && a.source[1] === b.source[1];
      const sameVector =
        a.target[0] - a.source[0] === b.target[0] - b.source[0] &&
        a.target[1] - a.source[1] === b.target[1] - b.source[1];
      if (sameSource && !sameVector) {
        problems.push(`ConflictingControlPoints: pairs ${i} and ${j}`);
      }
    }
  }
  return problems;
}

/** Canvas state -> the exact JSON document the service receives. */
export function toSpecDoc(state: CanvasState): DragSpecDoc {
  return {
    image: { width_px: state.imageWidth, height_px: state.imageHeight },
    downscale_factor: state.downscale,
    pairs: state.pairs.map((p) => ({
      source: [p.source[0], p.source[1]],
      target: [p.target[0], p.target[1]],
    })),
    mask: maskToDataUrl(state.imageWidth, state.imageHeight, state.mask),
  };
}

/** Spec JSON -> canvas state; UI-only fields take their defaults. */
export function fromSpecDoc(doc: DragSpecDoc): CanvasState {
  const state = newState(doc.image.width_px, doc.image.height_px, doc.downscale_factor);
  state.pairs = doc.pairs.map((p) => ({
    source: [p.source[0], p.source[1]],
    target: [p.target[0], p.target[1]],
  }));
  const pnm = dataUrlToPnm(doc.mask);
  if (pnm.channels !== 1 || pnm.width !== state.imageWidth || pnm.height !== state.imageHeight) {
    throw new Error("mask does not match the declared image size");
  }
  state.mask = pnm.data;
  return state;
}
