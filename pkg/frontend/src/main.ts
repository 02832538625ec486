/** Drag-authoring studio: canvas wiring around the state/api/overlay modules.
 *
 * The browser only captures gestures and composites server results; all drag
 * math lives behind the HTTP API.
 */

import { ApiClient, ApiError, LiveFeedback } from "./api.js";
import { parseDkf1, type FieldData } from "./dkf1.js";
import { composite } from "./overlay.js";
import { decodePnm, type PnmImage } from "./pnm.js";
import { decodeRle } from "./rle.js";
import {
  addPair,
  deletePair,
  hitTestEndpoint,
  movePairEndpoint,
  newState,
  paintBrush,
  toSpecDoc,
  validate,
  type CanvasState,
  type EndpointHit,
} from "./state.js";
import type { DragSpecDoc, EditSummary, PointPx } from "./types.js";

interface EditResult {
  summary: EditSummary;
  field: FieldData;
  preview: PnmImage;
}

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("canvas");
const ctx = canvas.getContext("2d")!;
const banner = $<HTMLDivElement>("banner");
const hint = $<HTMLDivElement>("hint");
const statusEl = $<HTMLSpanElement>("status");
const pairsList = $<HTMLOListElement>("pairs");
const fileInput = $<HTMLInputElement>("file");
const apiBaseInput = $<HTMLInputElement>("api-base");
const brushRange = $<HTMLInputElement>("brush-radius");

let state: CanvasState | null = null;
let baseRgba: Uint8ClampedArray | null = null;
let lastGood: EditResult | null = null;
let api = new ApiClient(apiBaseInput.value || window.location.origin);
let feedback: LiveFeedback<DragSpecDoc, EditResult> | null = null;

type Tool = "drag" | "paint" | "erase";
let tool: Tool = "drag";
let dragStart: PointPx | null = null;
let dragCurrent: PointPx | null = null;
let movingEndpoint: EndpointHit | null = null;
let painting = false;

function showBanner(text: string): void {
  banner.textContent = text;
  banner.hidden = false;
}

function clearBanner(): void {
  banner.hidden = true;
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}

function makeFeedback(): LiveFeedback<DragSpecDoc, EditResult> {
  return new LiveFeedback({
    debounceMs: 250,
    perform: async (doc) => {
      if (!state?.sessionId) throw new Error("no active session");
      const summary = await api.computeEdit(state.sessionId, doc);
      const [fieldBytes, previewBytes] = await Promise.all([
        api.artifact(state.sessionId, "field"),
        api.artifact(state.sessionId, "preview"),
      ]);
      return { summary, field: parseDkf1(fieldBytes), preview: decodePnm(previewBytes) };
    },
    apply: (result) => {
      lastGood = result;
      clearBanner();
      statusEl.textContent = `computed in ${result.summary.wall_time_ms.toFixed(1)} ms`;
      render();
    },
    onError: (err) => {
      // keep the last good overlay on screen, surface the failure passively
      showBanner(describeError(err));
    },
  });
}

function scheduleFeedback(): void {
  if (!state || !feedback || !state.sessionId) return;
  const problems = validate(state);
  hint.textContent = problems.join("; ");
  if (problems.length > 0) return; // mirrors the server's 422s before submitting
  feedback.request(toSpecDoc(state));
}

function render(): void {
  if (!state || !baseRgba) return;
  const summary = lastGood?.summary ?? null;
  const rgba = composite({
    width: state.imageWidth,
    height: state.imageHeight,
    base: baseRgba,
    f: state.downscale,
    gridW: summary?.grid.width ?? Math.ceil(state.imageWidth / state.downscale),
    gridH: summary?.grid.height ?? Math.ceil(state.imageHeight / state.downscale),
    paintMask: state.toggles.srcMask ? state.mask : null,
    dstCells:
      state.toggles.dstMask && summary ? decodeRle(summary.mask_dst_rle) : null,
    field: state.toggles.field && lastGood ? lastGood.field : null,
    pairs: state.pairs,
    preview: state.toggles.preview && lastGood ? lastGood.preview : null,
  });
  ctx.putImageData(new ImageData(rgba, state.imageWidth, state.imageHeight), 0, 0);
  if (dragStart && dragCurrent) {
    ctx.strokeStyle = "#ffffff";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.moveTo(dragStart[0], dragStart[1]);
    ctx.lineTo(dragCurrent[0], dragCurrent[1]);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  renderPairList();
}

function renderPairList(): void {
  if (!state) return;
  pairsList.replaceChildren();
  const reach = lastGood?.summary.reachability ?? [];
  state.pairs.forEach((pair, index) => {
    const li = document.createElement("li");
    if (index === state!.selectedPair) li.classList.add("selected");
    const badge = document.createElement("span");
    badge.className = "badge " + (reach[index] ? "ok" : "pending");
    badge.title = reach[index] ? "target inside destination region" : "target not reached";
    badge.textContent = reach[index] ? "●" : "○";
    const label = document.createElement("span");
    label.textContent =
      ` (${pair.source[0]},${pair.source[1]}) → (${pair.target[0]},${pair.target[1]}) `;
    const del = document.createElement("button");
    del.textContent = "✕";
    del.addEventListener("click", () => {
      deletePair(state!, index);
      render();
      scheduleFeedback();
    });
    li.append(badge, label, del);
    li.addEventListener("click", () => {
      state!.selectedPair = index;
      render();
    });
    pairsList.append(li);
  });
}

function canvasPoint(ev: MouseEvent): PointPx {
  const rect = canvas.getBoundingClientRect();
  return [
    Math.round(((ev.clientX - rect.left) / rect.width) * canvas.width),
    Math.round(((ev.clientY - rect.top) / rect.height) * canvas.height),
  ];
}

async function loadImage(file: File): Promise<void> {
  const bytes = new Uint8Array(await file.arrayBuffer());
  let width: number;
  let height: number;
  let rgba: Uint8ClampedArray;
  const magic = String.fromCharCode(bytes[0] ?? 0, bytes[1] ?? 0);
  if (magic === "P5" || magic === "P6") {
    const pnm = decodePnm(bytes);
    width = pnm.width;
    height = pnm.height;
    rgba = new Uint8ClampedArray(width * height * 4);
    for (let i = 0; i < width * height; i++) {
      const s = i * pnm.channels;
      rgba[i * 4] = pnm.data[s];
      rgba[i * 4 + 1] = pnm.data[pnm.channels === 3 ? s + 1 : s];
      rgba[i * 4 + 2] = pnm.data[pnm.channels === 3 ? s + 2 : s];
      rgba[i * 4 + 3] = 255;
    }
  } else {
    const bitmap = await createImageBitmap(new Blob([bytes]));
    width = bitmap.width;
    height = bitmap.height;
    const off = document.createElement("canvas");
    off.width = width;
    off.height = height;
    const octx = off.getContext("2d")!;
    octx.drawImage(bitmap, 0, 0);
    rgba = octx.getImageData(0, 0, width, height).data;
  }

  state = newState(width, height);
  baseRgba = rgba;
  lastGood = null;
  canvas.width = width;
  canvas.height = height;
  feedback = makeFeedback();
  render();

  statusEl.textContent = "creating session…";
  try {
    state.sessionId = await api.createSession(bytes);
    statusEl.textContent = `session ${state.sessionId.slice(0, 8)}…`;
    clearBanner();
  } catch (err) {
    showBanner(describeError(err));
    statusEl.textContent = "no session";
  }
  scheduleFeedback();
}

fileInput.addEventListener("change", () => {
  const file = fileInput.files?.[0];
  if (file) void loadImage(file);
});

apiBaseInput.addEventListener("change", () => {
  api = new ApiClient(apiBaseInput.value || window.location.origin);
  statusEl.textContent = "api base changed; reload an image to start a session";
});

for (const id of ["tool-drag", "tool-paint", "tool-erase"] as const) {
  $<HTMLInputElement>(id).addEventListener("change", () => {
    tool = id.replace("tool-", "") as Tool;
  });
}

brushRange.addEventListener("input", () => {
  if (state) state.brushRadius = Number(brushRange.value);
});

for (const [id, key] of [
  ["toggle-src", "srcMask"],
  ["toggle-dst", "dstMask"],
  ["toggle-field", "field"],
  ["toggle-preview", "preview"],
] as const) {
  $<HTMLInputElement>(id).addEventListener("change", (ev) => {
    if (!state) return;
    state.toggles[key] = (ev.target as HTMLInputElement).checked;
    render();
  });
}

$<HTMLButtonElement>("clear-mask").addEventListener("click", () => {
  if (!state) return;
  state.mask.fill(0);
  render();
  scheduleFeedback();
});

canvas.addEventListener("mousedown", (ev) => {
  if (!state) return;
  const p = canvasPoint(ev);
  if (tool === "drag") {
    movingEndpoint = hitTestEndpoint(state, p);
    if (!movingEndpoint) {
      dragStart = p;
      dragCurrent = p;
    }
  } else {
    painting = true;
    paintBrush(state, p[0], p[1], state.brushRadius, tool === "erase");
    render();
  }
});

canvas.addEventListener("mousemove", (ev) => {
  if (!state) return;
  const p = canvasPoint(ev);
  if (tool === "drag" && movingEndpoint) {
    movePairEndpoint(state, movingEndpoint.index, movingEndpoint.which, p);
    render();
  } else if (tool === "drag" && dragStart) {
    dragCurrent = p;
    render();
  } else if (painting) {
    paintBrush(state, p[0], p[1], state.brushRadius, tool === "erase");
    render();
  }
});

window.addEventListener("mouseup", (ev) => {
  if (!state) return;
  if (tool === "drag" && movingEndpoint) {
    movingEndpoint = null;
    scheduleFeedback();
  } else if (tool === "drag" && dragStart) {
    const p = canvasPoint(ev as MouseEvent);
    addPair(state, dragStart, p); // press = source, release = target
    dragStart = null;
    dragCurrent = null;
    render();
    scheduleFeedback();
  } else if (painting) {
    painting = false;
    scheduleFeedback();
  }
});

window.addEventListener("keydown", (ev) => {
  if (!state) return;
  if ((ev.key === "Delete" || ev.key === "Backspace") && state.selectedPair >= 0) {
    deletePair(state, state.selectedPair);
    render();
    scheduleFeedback();
  }
});

statusEl.textContent = "load an image to begin";
