"""File formats and pixel-space plumbing around the engine.

Covers the drag-spec JSON document, PGM/PPM and PNG images, the DKF1 binary
field container, run-length mask encoding, canonical JSON, the pixel preview
warp, overlay rendering, and bundle assembly shared by the CLI and the
service. Every writer here is byte-deterministic.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .attention import MaskPolicy
from .errors import MalformedSpec, MaskSizeMismatch, ShapeMismatch
from .harness import RunTrace
from .injection import LambdaSchedule
from .lrm import (
    BinaryMask,
    Correspondence,
    DragPair,
    LrmConfig,
    Point2,
    VectorField,
    reverse_map,
    round_half_away,
)

__all__ = [
    "DragSpecFile",
    "OverlayLayers",
    "EditBundle",
    "parse_drag_spec",
    "spec_to_dict",
    "pixels_to_tokens",
    "preview_warp",
    "render_overlay",
    "compute_bundle",
    "write_bundle",
    "read_pnm",
    "write_pgm",
    "write_ppm",
    "decode_image",
    "write_field_file",
    "read_field_file",
    "mask_rle",
    "canonical_json_bytes",
    "trace_json_bytes",
    "corr_to_dict",
    "MEDIA_TYPES",
]

FIELD_MAGIC = b"DKF1"

MEDIA_TYPES = {
    ".pgm": "image/x-portable-graymap",
    ".ppm": "image/x-portable-pixmap",
    ".png": "image/png",
    ".dkf1": "application/octet-stream",
    ".json": "application/json",
}

# overlay palette (compositing is pure integer math, so output is reproducible)
SRC_TINT = (255, 160, 0)
DST_TINT = (0, 200, 255)
ARROW_COLOR = (255, 255, 0)
SOURCE_POINT_COLOR = (255, 0, 0)
TARGET_POINT_COLOR = (0, 0, 255)
POINT_RADIUS = 3


# --- low-level codecs -------------------------------------------------------


def _pnm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` ASCII header tokens, honoring '#' comments; returns offset."""
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise MalformedSpec("truncated PNM header")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i


def read_pnm(data: bytes) -> np.ndarray:
    """Decode binary PGM (P5) to (h, w) or PPM (P6) to (h, w, 3) uint8."""
    if data[:2] not in (b"P5", b"P6"):
        raise MalformedSpec(f"not a binary PGM/PPM file (magic {data[:2]!r})")
    channels = 1 if data[:2] == b"P5" else 3
    tokens, i = _pnm_tokens(data[2:], 3)
    i += 2 + 1  # magic + the single whitespace byte after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedSpec("non-numeric PNM header") from None
    if maxval != 255:
        raise MalformedSpec(f"only 8-bit PNM supported, maxval={maxval}")
    need = w * h * channels
    payload = data[i : i + need]
    if len(payload) != need:
        raise MalformedSpec(f"PNM payload holds {len(payload)} bytes, expected {need}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    return arr.reshape((h, w) if channels == 1 else (h, w, 3))


def write_pgm(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes()


def write_ppm(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    h, w, _ = arr.shape
    return b"P6\n%d %d\n255\n" % (w, h) + arr.tobytes()


def decode_image(data: bytes, grayscale: bool = False) -> np.ndarray:
    """Decode PGM/PPM natively, anything else through Pillow.

    Returns (h, w) uint8 for single-channel input (or when `grayscale`),
    else (h, w, 3).
    """
    if not data:
        raise MalformedSpec("empty image data")
    if data[:2] in (b"P5", b"P6"):
        arr = read_pnm(data)
    else:
        try:
            with Image.open(io.BytesIO(data)) as img:
                arr = np.asarray(img.convert("L" if grayscale else "RGB"))
        except (UnidentifiedImageError, OSError) as exc:
            raise MalformedSpec(f"cannot decode image: {exc}") from None
    if grayscale and arr.ndim == 3:
        arr = np.asarray(Image.fromarray(arr).convert("L"))
    return arr


def write_field_file(values: np.ndarray) -> bytes:
    """DKF1: magic, u32 width/height/channels, little-endian f32 payload."""
    values = np.asarray(values)
    if values.ndim != 3:
        raise ShapeMismatch(f"field payload must be (h, w, c), got {values.shape}")
    h, w, c = values.shape
    return (
        FIELD_MAGIC
        + struct.pack("<III", w, h, c)
        + np.ascontiguousarray(values, dtype="<f4").tobytes()
    )


def read_field_file(data: bytes) -> np.ndarray:
    if data[:4] != FIELD_MAGIC:
        raise MalformedSpec(f"bad field-file magic {data[:4]!r}")
    w, h, c = struct.unpack("<III", data[4:16])
    payload = data[16:]
    if len(payload) != w * h * c * 4:
        raise MalformedSpec("field-file payload length mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c)


def mask_rle(mask: BinaryMask) -> dict:
    """Row-major [start, length] runs over the flattened grid."""
    flat = mask.cells.ravel().astype(np.int8)
    edges = np.flatnonzero(np.diff(np.concatenate([[0], flat, [0]])))
    starts, ends = edges[0::2], edges[1::2]
    return {
        "width": mask.width,
        "height": mask.height,
        "runs": [[int(s), int(e - s)] for s, e in zip(starts, ends)],
    }


def canonical_json_bytes(obj) -> bytes:
    return (
        json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"
    ).encode("ascii")


def corr_to_dict(corr: Correspondence) -> dict:
    return {
        "width": corr.width,
        "height": corr.height,
        "entries": [
            {"dst": [qx, qy], "src": [px, py]} for (qx, qy), (px, py) in corr.entries()
        ],
    }


def trace_json_bytes(trace: RunTrace) -> bytes:
    return canonical_json_bytes(trace.to_dict())


# --- the drag-spec document --------------------------------------------------


@dataclass
class DragSpecFile:
    """Parsed drag-spec document (pixel coordinates throughout)."""

    image_width: int
    image_height: int
    downscale: int
    pairs: list[tuple[tuple[float, float], tuple[float, float]]]
    mask: str  # path (resolved against base_dir) or data: URL
    lrm: LrmConfig
    schedule: LambdaSchedule
    block_subset: list[int] | None
    mask_policy: MaskPolicy
    base_dir: Path | None = None

    def load_mask_pixels(self, allow_paths: bool = True) -> np.ndarray:
        if self.mask.startswith("data:"):
            _, _, payload = self.mask.partition(",")
            try:
                data = base64.b64decode(payload, validate=True)
            except binascii.Error:
                raise MalformedSpec("mask data URL is not valid base64") from None
        elif allow_paths:
            path = Path(self.mask)
            if self.base_dir is not None and not path.is_absolute():
                path = self.base_dir / path
            try:
                data = path.read_bytes()
            except OSError:
                raise MalformedSpec(f"mask file not readable: {path}") from None
        else:
            raise MalformedSpec("mask must be an inline data: URL in this context")
        arr = decode_image(data, grayscale=True)
        if arr.shape != (self.image_height, self.image_width):
            raise MaskSizeMismatch(
                f"mask is {arr.shape[1]}x{arr.shape[0]}, image is "
                f"{self.image_width}x{self.image_height}"
            )
        return arr


def _require(doc: dict, key: str):
    if key not in doc:
        raise MalformedSpec(f"missing required field {key!r}")
    return doc[key]


def _coerce_point(value, width: int, height: int, what: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise MalformedSpec(f"{what} must be an [x, y] pair")
    try:
        x, y = float(value[0]), float(value[1])
    except (TypeError, ValueError):
        raise MalformedSpec(f"{what} coordinates must be numbers") from None
    if not (math.isfinite(x) and math.isfinite(y)):
        raise MalformedSpec(f"{what} coordinates must be finite")
    if not (0 <= x <= width and 0 <= y <= height):
        raise MalformedSpec(f"{what} ({x}, {y}) outside image bounds {width}x{height}")
    return x, y


def parse_drag_spec(doc: dict, base_dir: Path | None = None) -> DragSpecFile:
    """Validate a drag-spec JSON document; coincident pairs become anchors."""
    if not isinstance(doc, dict):
        raise MalformedSpec("spec document must be a JSON object")
    image = _require(doc, "image")
    if not isinstance(image, dict):
        raise MalformedSpec("'image' must be an object")
    try:
        width = int(image["width_px"])
        height = int(image["height_px"])
    except (KeyError, TypeError, ValueError):
        raise MalformedSpec("'image' needs integer width_px/height_px") from None
    if width < 1 or height < 1:
        raise MalformedSpec("image dimensions must be positive")

    downscale = doc.get("downscale_factor", 16)
    if not isinstance(downscale, int) or isinstance(downscale, bool) or downscale < 1:
        raise MalformedSpec(f"downscale_factor must be an integer >= 1, got {downscale!r}")

    raw_pairs = _require(doc, "pairs")
    if not isinstance(raw_pairs, list) or not raw_pairs:
        raise MalformedSpec("'pairs' must be a non-empty list")
    pairs = []
    for i, item in enumerate(raw_pairs):
        if not isinstance(item, dict):
            raise MalformedSpec(f"pair {i} must be an object")
        s = _coerce_point(_require(item, "source"), width, height, f"pair {i} source")
        t = _coerce_point(_require(item, "target"), width, height, f"pair {i} target")
        pairs.append((s, t))

    mask = _require(doc, "mask")
    if not isinstance(mask, str) or not mask:
        raise MalformedSpec("'mask' must be a path or data: URL string")

    lrm_doc = doc.get("lrm", {})
    if not isinstance(lrm_doc, dict):
        raise MalformedSpec("'lrm' must be an object")
    try:
        lrm = replace(LrmConfig(), **lrm_doc)
    except (TypeError, ValueError) as exc:
        raise MalformedSpec(f"bad lrm overrides: {exc}") from None

    inj_doc = dict(doc.get("injection", {}))
    if not isinstance(inj_doc, dict):
        raise MalformedSpec("'injection' must be an object")
    block_subset = inj_doc.pop("block_subset", None)
    if block_subset is not None:
        if not isinstance(block_subset, list) or not all(
            isinstance(b, int) and not isinstance(b, bool) and b >= 0 for b in block_subset
        ):
            raise MalformedSpec("block_subset must be a list of non-negative integers")
        block_subset = sorted(set(block_subset))
    try:
        schedule = replace(LambdaSchedule(), **inj_doc)
    except (TypeError, ValueError) as exc:
        raise MalformedSpec(f"bad injection overrides: {exc}") from None

    policy_name = doc.get("mask_policy", MaskPolicy.VERBATIM.value)
    try:
        policy = MaskPolicy(policy_name)
    except ValueError:
        raise MalformedSpec(f"unknown mask_policy {policy_name!r}") from None

    return DragSpecFile(
        image_width=width,
        image_height=height,
        downscale=downscale,
        pairs=pairs,
        mask=mask,
        lrm=lrm,
        schedule=schedule,
        block_subset=block_subset,
        mask_policy=policy,
        base_dir=base_dir,
    )


def spec_to_dict(spec: DragSpecFile) -> dict:
    """Full-form document; parse(spec_to_dict(s)) is a fixed point."""
    lrm = spec.lrm
    sched = spec.schedule
    return {
        "image": {"width_px": spec.image_width, "height_px": spec.image_height},
        "downscale_factor": spec.downscale,
        "pairs": [
            {"source": [sx, sy], "target": [tx, ty]} for (sx, sy), (tx, ty) in spec.pairs
        ],
        "mask": spec.mask,
        "lrm": {
            "epsilon": lrm.epsilon,
            "dilation_radius": lrm.dilation_radius,
            "exact_hit_tolerance": lrm.exact_hit_tolerance,
            "global_hull": lrm.global_hull,
            "hull_tolerance": lrm.hull_tolerance,
        },
        "injection": {
            "total_steps": sched.total_steps,
            "hold_until": sched.hold_until,
            "zero_from": sched.zero_from,
            "lambda_init": sched.lambda_init,
            "block_subset": spec.block_subset,
        },
        "mask_policy": spec.mask_policy.value,
    }


# --- pixel <-> token ----------------------------------------------------------


def pixels_to_tokens(
    spec: DragSpecFile, mask_pixels: np.ndarray | None = None, allow_paths: bool = True
) -> tuple[tuple[int, int], list[DragPair], BinaryMask]:
    """Token grid, token-space drag pairs, and the pooled token mask.

    Pixel points map to x/f without rounding; a token cell is set when at
    least half of the pixels it covers are inside the mask.
    """
    f = spec.downscale
    grid_h = -(-spec.image_height // f)
    grid_w = -(-spec.image_width // f)
    if mask_pixels is None:
        mask_pixels = spec.load_mask_pixels(allow_paths=allow_paths)

    pairs = []
    for (sx, sy), (tx, ty) in spec.pairs:
        source = Point2(sx / f, sy / f)
        target = Point2(tx / f, ty / f)
        pairs.append(DragPair(source, target, anchor=source == target))

    inside = (mask_pixels >= 128).astype(np.int64)
    row_idx = np.arange(0, spec.image_height, f)
    col_idx = np.arange(0, spec.image_width, f)
    sums = np.add.reduceat(np.add.reduceat(inside, row_idx, axis=0), col_idx, axis=1)
    rows = np.minimum(row_idx + f, spec.image_height) - row_idx
    cols = np.minimum(col_idx + f, spec.image_width) - col_idx
    counts = np.outer(rows, cols)
    cells = (2 * sums >= counts).astype(np.uint8)
    assert cells.shape == (grid_h, grid_w)
    return (grid_h, grid_w), pairs, BinaryMask(cells)


def preview_warp(image: np.ndarray, corr: Correspondence, f: int) -> np.ndarray:
    """Copy each destination cell's f x f pixel block from its source block."""
    img_h, img_w = image.shape[:2]
    if -(-img_h // f) != corr.height or -(-img_w // f) != corr.width:
        raise ShapeMismatch(
            f"image {img_w}x{img_h} with f={f} does not cover grid "
            f"{corr.width}x{corr.height}"
        )
    out = image.copy()
    for (qx, qy), (px, py) in corr.entries():
        src = image[py * f : (py + 1) * f, px * f : (px + 1) * f]
        dy0, dx0 = qy * f, qx * f
        dst = out[dy0 : (qy + 1) * f, dx0 : (qx + 1) * f]
        sh = min(src.shape[0], dst.shape[0])
        sw = min(src.shape[1], dst.shape[1])
        out[dy0 : dy0 + sh, dx0 : dx0 + sw] = src[:sh, :sw]
    return out


# --- overlay rendering ----------------------------------------------------------


@dataclass
class OverlayLayers:
    mask_src: BinaryMask | None = None
    mask_dst: BinaryMask | None = None
    field: VectorField | None = None
    pairs: list[tuple[tuple[float, float], tuple[float, float]]] | None = None  # pixel coords


def _to_rgb(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return np.repeat(image[:, :, None], 3, axis=2).astype(np.int32)
    return image.astype(np.int32)


def _tint(canvas: np.ndarray, cells: np.ndarray, f: int, color) -> None:
    h, w = canvas.shape[:2]
    pix = np.kron(cells.astype(bool), np.ones((f, f), dtype=bool))[:h, :w]
    tint = np.array(color, dtype=np.int32)
    canvas[pix] = (2 * canvas[pix] + tint) // 3


def _disc(canvas: np.ndarray, cx: int, cy: int, radius: int, color) -> None:
    h, w = canvas.shape[:2]
    y0, y1 = max(0, cy - radius), min(h, cy + radius + 1)
    x0, x1 = max(0, cx - radius), min(w, cx + radius + 1)
    if y0 >= y1 or x0 >= x1:
        return
    ys, xs = np.mgrid[y0:y1, x0:x1]
    hit = (ys - cy) ** 2 + (xs - cx) ** 2 <= radius * radius
    canvas[y0:y1, x0:x1][hit] = color


def _line(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    h, w = canvas.shape[:2]
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx, sy = (1 if x0 < x1 else -1), (1 if y0 < y1 else -1)
    err = dx + dy
    while True:
        if 0 <= x0 < w and 0 <= y0 < h:
            canvas[y0, x0] = color
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def render_overlay(
    image: np.ndarray, layers: OverlayLayers, f: int, stride: int = 1
) -> np.ndarray:
    """Composite masks, field arrows, and control points over the image.

    Order is fixed (source tint, destination tint, arrows, red source discs,
    blue target discs) and all math is integer, so output bytes depend only
    on the inputs.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    canvas = _to_rgb(image)
    h, w = canvas.shape[:2]
    for mask, color in ((layers.mask_src, SRC_TINT), (layers.mask_dst, DST_TINT)):
        if mask is not None:
            if (-(-h // f), -(-w // f)) != mask.cells.shape:
                raise ShapeMismatch("overlay mask does not cover the image grid")
            _tint(canvas, mask.cells, f, color)
    if layers.field is not None:
        vec = layers.field.vectors
        if (-(-h // f), -(-w // f)) != vec.shape[:2]:
            raise ShapeMismatch("overlay field does not cover the image grid")
        ys, xs = np.nonzero(np.abs(vec).sum(axis=2) > 0)
        for y, x in zip(ys.tolist(), xs.tolist()):
            if x % stride or y % stride:
                continue
            x0 = int(round((x + 0.5) * f))
            y0 = int(round((y + 0.5) * f))
            x1 = int(round((x + vec[y, x, 0] + 0.5) * f))
            y1 = int(round((y + vec[y, x, 1] + 0.5) * f))
            _line(canvas, x0, y0, x1, y1, ARROW_COLOR)
            _disc(canvas, x1, y1, 1, ARROW_COLOR)
    for (sx, sy), (tx, ty) in layers.pairs or []:
        _disc(canvas, int(round(sx)), int(round(sy)), POINT_RADIUS, SOURCE_POINT_COLOR)
    for (sx, sy), (tx, ty) in layers.pairs or []:
        _disc(canvas, int(round(tx)), int(round(ty)), POINT_RADIUS, TARGET_POINT_COLOR)
    return np.clip(canvas, 0, 255).astype(np.uint8)


# --- bundle assembly --------------------------------------------------------------


@dataclass(eq=False)
class EditBundle:
    """All artifacts computed for one (image, spec) pair."""

    grid: tuple[int, int]
    mask_src: BinaryMask
    mask_dst: BinaryMask
    field: VectorField
    corr: Correspondence
    preview: np.ndarray
    overlay: np.ndarray
    summary: dict  # deterministic; wall time is reported separately


def compute_bundle(spec: DragSpecFile, image: np.ndarray, allow_paths: bool = True) -> EditBundle:
    """Run the full pixel-in, artifacts-out pipeline for one edit."""
    if image.shape[:2] != (spec.image_height, spec.image_width):
        raise MalformedSpec(
            f"image is {image.shape[1]}x{image.shape[0]}, spec declares "
            f"{spec.image_width}x{spec.image_height}"
        )
    grid, pairs, mask_src = pixels_to_tokens(spec, allow_paths=allow_paths)
    mask_dst, field, corr = reverse_map(mask_src, pairs, spec.lrm)
    preview = preview_warp(image, corr, spec.downscale)
    overlay = render_overlay(
        image,
        OverlayLayers(mask_src=mask_src, mask_dst=mask_dst, field=field, pairs=spec.pairs),
        spec.downscale,
    )
    f = spec.downscale
    reach = []
    for _, (tx, ty) in spec.pairs:
        cx, cy = (int(v) for v in round_half_away(np.array([tx / f, ty / f])))
        inside = 0 <= cx < grid[1] and 0 <= cy < grid[0] and mask_dst.cells[cy, cx] == 1
        reach.append(bool(inside))
    preview_name = "preview.pgm" if preview.ndim == 2 else "preview.ppm"
    summary = {
        "grid": {"width": grid[1], "height": grid[0]},
        "downscale_factor": f,
        "mask_src_rle": mask_rle(mask_src),
        "mask_dst_rle": mask_rle(mask_dst),
        "reachability": reach,
        "artifacts": {
            "mask_src": "mask_src.pgm",
            "mask_dst": "mask_dst.pgm",
            "field": "field.dkf1",
            "corr": "corr.json",
            "preview": preview_name,
            "overlay": "overlay.ppm",
        },
    }
    return EditBundle(grid, mask_src, mask_dst, field, corr, preview, overlay, summary)


def write_bundle(directory: Path, bundle: EditBundle, trace: RunTrace | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = bundle.summary["artifacts"]
    (directory / names["mask_src"]).write_bytes(write_pgm(bundle.mask_src.cells * 255))
    (directory / names["mask_dst"]).write_bytes(write_pgm(bundle.mask_dst.cells * 255))
    (directory / names["field"]).write_bytes(write_field_file(bundle.field.vectors))
    (directory / names["corr"]).write_bytes(canonical_json_bytes(corr_to_dict(bundle.corr)))
    if bundle.preview.ndim == 2:
        (directory / names["preview"]).write_bytes(write_pgm(bundle.preview))
    else:
        (directory / names["preview"]).write_bytes(write_ppm(bundle.preview))
    (directory / names["overlay"]).write_bytes(write_ppm(bundle.overlay))
    summary = dict(bundle.summary)
    if trace is not None:
        summary["artifacts"] = dict(names, trace="trace.json")
        (directory / "trace.json").write_bytes(trace_json_bytes(trace))
    (directory / "summary.json").write_bytes(canonical_json_bytes(summary))
