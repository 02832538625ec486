"""Drag warping field on the token grid.

Pipeline: inverse-distance forward displacement of the source region,
convex-hull coarse target construction, then a reverse inverse-distance
lookup that validates every destination cell against the source mask and
records its per-cell correspondence.

Conventions: a ``width x height`` grid stores cell (x, y) at ``array[y, x]``
and places its center at real coordinates (x, y). 2-vectors are (x, y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConflictingControlPoints, EmptySourceRegion

__all__ = [
    "Point2",
    "DragPair",
    "BinaryMask",
    "VectorField",
    "Correspondence",
    "LrmConfig",
    "forward_displacement",
    "reverse_displacement",
    "build_coarse_target",
    "reverse_map",
    "round_half_away",
]

_FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round half away from zero, per coordinate (direct-indexing convention)."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)



@dataclass(frozen=True)
class Point2:
    """A point in token-grid units."""

    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"point must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class DragPair:
    """A (source, target) control-point pair; their difference is the drag vector."""

    source: Point2
    target: Point2
    anchor: bool = False  # a coincident pair must be an explicit zero-drag anchor

    def __post_init__(self):
        if self.source == self.target and not self.anchor:
            raise ValueError("coincident source/target requires anchor=True")

    @property
    def vector(self) -> np.ndarray:
        return self.target.as_array() - self.source.as_array()


@dataclass(eq=False)
class BinaryMask:
    """A {0,1} grid region, shape (height, width)."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {cells.shape}")
        if not np.isin(cells, (0, 1)).all():
            raise ValueError("mask cells must be 0 or 1")
        self.cells = cells.astype(np.uint8)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    @classmethod
    def from_cells(cls, width: int, height: int, cells) -> "BinaryMask":
        grid = np.zeros((height, width), dtype=np.uint8)
        for x, y in cells:
            grid[y, x] = 1
        return cls(grid)

    def set_cells(self) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(self.cells)
        return sorted(zip(xs.tolist(), ys.tolist()))

    def centers(self) -> np.ndarray:
        """Centers of the set cells as (n, 2) reals, row-major order."""
        ys, xs = np.nonzero(self.cells)
        return np.stack([xs, ys], axis=1).astype(np.float64)


@dataclass(eq=False)
class VectorField:
    """Per-cell 2-vectors (token units), shape (height, width, 2); zero off-region."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError(f"field must have shape (h, w, 2), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("field vectors must be finite")
        self.vectors = v

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @property
    def height(self) -> int:
        return self.vectors.shape[0]


@dataclass(eq=False)
class Correspondence:
    """Destination-to-source cell mapping; entries exist exactly on the destination mask."""

    present: np.ndarray  # (h, w) bool
    source: np.ndarray  # (h, w, 2) int (x, y); (-1, -1) where absent

    def __post_init__(self):
        present = np.asarray(self.present, dtype=bool)
        source = np.asarray(self.source, dtype=np.int32)
        if present.ndim != 2 or source.shape != present.shape + (2,):
            raise ValueError(
                f"inconsistent correspondence shapes {present.shape} / {source.shape}"
            )
        self.present = present
        self.source = source

    @property
    def width(self) -> int:
        return self.present.shape[1]

    @property
    def height(self) -> int:
        return self.present.shape[0]

    @classmethod
    def identity(cls, mask: BinaryMask) -> "Correspondence":
        h, w = mask.cells.shape
        xs, ys = np.meshgrid(np.arange(w), np.arange(h))
        source = np.stack([xs, ys], axis=2).astype(np.int32)
        present = mask.cells.astype(bool)
        source[~present] = -1
        return cls(present, source)

    def entries(self) -> list[tuple[tuple[int, int], tuple[int, int]]]:
        """Row-major list of ((dst x, dst y), (src x, src y)) for present cells."""
        out = []
        ys, xs = np.nonzero(self.present)
        for y, x in zip(ys.tolist(), xs.tolist()):
            sx, sy = self.source[y, x]
            out.append(((x, y), (int(sx), int(sy))))
        return out


@dataclass(frozen=True)
class LrmConfig:
    epsilon: float = 1e-8  # keeps the IDW denominator away from 0/0
    dilation_radius: int = 1  # square structuring element, in cells
    exact_hit_tolerance: float = 1e-9  # distance at which a control point is "hit"
    global_hull: bool = False  # hull per 4-connected component unless set
    hull_tolerance: float = 1e-6  # "on the hull" slack for rasterization, token units

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.dilation_radius < 0:
            raise ValueError("dilation_radius must be >= 0")


def _pair_arrays(pairs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not pairs:
        raise ValueError("pairs must be non-empty")
    sources = np.array([[p.source.x, p.source.y] for p in pairs], dtype=np.float64)
    targets = np.array([[p.target.x, p.target.y] for p in pairs], dtype=np.float64)
    return sources, targets, targets - sources


def _check_conflicts(anchors: np.ndarray, vectors: np.ndarray, tol: float, kind: str):
    n = len(anchors)
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(anchors[i] - anchors[j]) <= tol and not np.array_equal(
                vectors[i], vectors[j]
            ):
                raise ConflictingControlPoints(
                    f"pairs {i} and {j} share a {kind} point but disagree on the drag vector"
                )


def _idw_field(
    points: np.ndarray,
    anchors: np.ndarray,
    vectors: np.ndarray,
    epsilon: float,
    exact_tol: float,
) -> np.ndarray:
    """Inverse-square-distance weighting of `vectors` at `points`.

    A point within `exact_tol` of an anchor takes that anchor's vector
    verbatim (first such anchor wins); the weights diverge there otherwise.
    """
    if points.size == 0:
        return np.zeros((0, 2), dtype=np.float64)
    diff = points[:, None, :] - anchors[None, :, :]
    d2 = np.einsum("nmk,nmk->nm", diff, diff)
    hits = d2 <= exact_tol * exact_tol
    with np.errstate(divide="ignore"):
        weights = 1.0 / d2
    weights[hits] = 0.0
    out = (weights @ vectors) / (weights.sum(axis=1) + epsilon)[:, None]
    hit_rows = np.flatnonzero(hits.any(axis=1))
    if hit_rows.size:
        out[hit_rows] = vectors[np.argmax(hits[hit_rows], axis=1)]
    return out


def _as_xy(p) -> np.ndarray:
    if isinstance(p, Point2):
        return p.as_array()
    return np.asarray(p, dtype=np.float64).reshape(2)


def forward_displacement(p, pairs, cfg: LrmConfig | None = None) -> np.ndarray:
    """Provisional drag vector at `p`: source-anchored inverse-distance weighting."""
    cfg = cfg or LrmConfig()
    sources, _, vectors = _pair_arrays(pairs)
    _check_conflicts(sources, vectors, cfg.exact_hit_tolerance, "source")
    return _idw_field(_as_xy(p)[None], sources, vectors, cfg.epsilon, cfg.exact_hit_tolerance)[0]


def reverse_displacement(q, pairs, cfg: LrmConfig | None = None) -> np.ndarray:
    """Inverse displacement at `q`: target-anchored weighting of the reversed vectors."""
    cfg = cfg or LrmConfig()
    _, targets, vectors = _pair_arrays(pairs)
    _check_conflicts(targets, vectors, cfg.exact_hit_tolerance, "target")
    return _idw_field(_as_xy(q)[None], targets, -vectors, cfg.epsilon, cfg.exact_hit_tolerance)[0]


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counterclockwise; degenerates to 1 or 2 vertices."""
    pts = sorted(set(map(tuple, points.tolist())))
    if len(pts) == 1:
        return np.array(pts)
    if len(pts) == 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) > 1 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) > 1 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    # collinear inputs degenerate to the 2-point extremes here
    return np.array(lower[:-1] + upper[:-1])


def _hull_contains(centers: np.ndarray, hull: np.ndarray, tol: float) -> np.ndarray:
    """Inclusive membership of `centers` in the hull, within `tol` of the boundary."""
    if len(hull) == 1:
        return np.linalg.norm(centers - hull[0], axis=1) <= tol
    if len(hull) == 2:
        return _segment_distance(centers, hull[0], hull[1]) <= tol
    inside = np.ones(len(centers), dtype=bool)
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        edge = b - a
        norm = np.linalg.norm(edge)
        cross = edge[0] * (centers[:, 1] - a[1]) - edge[1] * (centers[:, 0] - a[0])
        inside &= cross >= -tol * norm
    return inside


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(points))
    nearest = a + t[:, None] * ab
    return np.linalg.norm(points - nearest, axis=1)


def _components(mask: BinaryMask, global_hull: bool):
    if global_hull:
        yield mask.centers()
        return
    labels, n = ndimage.label(mask.cells, structure=_FOUR_CONN)
    for k in range(1, n + 1):
        ys, xs = np.nonzero(labels == k)
        yield np.stack([xs, ys], axis=1).astype(np.float64)


def build_coarse_target(mask_src: BinaryMask, pairs, cfg: LrmConfig | None = None) -> BinaryMask:
    """Coarse destination region: hull of the displaced source cells, dilated.

    Each 4-connected component of the source is displaced and hulled
    independently (set ``cfg.global_hull`` for one hull over everything);
    cells whose centers land inside or on a hull are set, then the union is
    dilated by ``dilation_radius`` with a square element and clipped to grid.
    """
    cfg = cfg or LrmConfig()
    if mask_src.count == 0:
        raise EmptySourceRegion("source mask has no set cells")
    sources, _, vectors = _pair_arrays(pairs)
    _check_conflicts(sources, vectors, cfg.exact_hit_tolerance, "source")

    h, w = mask_src.cells.shape
    out = np.zeros((h, w), dtype=bool)
    for centers in _components(mask_src, cfg.global_hull):
        cloud = centers + _idw_field(centers, sources, vectors, cfg.epsilon, cfg.exact_hit_tolerance)
        hull = _convex_hull(cloud)
        x0 = max(0, int(np.floor(hull[:, 0].min() - cfg.hull_tolerance)))
        x1 = min(w - 1, int(np.ceil(hull[:, 0].max() + cfg.hull_tolerance)))
        y0 = max(0, int(np.floor(hull[:, 1].min() - cfg.hull_tolerance)))
        y1 = min(h - 1, int(np.ceil(hull[:, 1].max() + cfg.hull_tolerance)))
        if x0 > x1 or y0 > y1:
            continue  # hull entirely off-grid
        xs, ys = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
        cand = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
        keep = _hull_contains(cand, hull, cfg.hull_tolerance)
        out[cand[keep, 1].astype(int), cand[keep, 0].astype(int)] = True

    if cfg.dilation_radius > 0:
        size = 2 * cfg.dilation_radius + 1
        out = ndimage.binary_dilation(out, structure=np.ones((size, size), dtype=bool))
    return BinaryMask(out.astype(np.uint8))


def reverse_map(
    mask_src: BinaryMask, pairs, cfg: LrmConfig | None = None
) -> tuple[BinaryMask, VectorField, Correspondence]:
    """Validated destination mask, inverse field, and cell correspondences.

    Every coarse-target cell is reverse-displaced to a candidate source
    location; cells whose rounded location falls outside the grid or off
    the source mask are discarded (never clamped).
    """
    cfg = cfg or LrmConfig()
    coarse = build_coarse_target(mask_src, pairs, cfg)
    _, targets, vectors = _pair_arrays(pairs)
    _check_conflicts(targets, vectors, cfg.exact_hit_tolerance, "target")

    h, w = mask_src.cells.shape
    dst = np.zeros((h, w), dtype=np.uint8)
    field = np.zeros((h, w, 2), dtype=np.float64)
    present = np.zeros((h, w), dtype=bool)
    source = np.full((h, w, 2), -1, dtype=np.int32)

    centers = coarse.centers()
    wq = _idw_field(centers, targets, -vectors, cfg.epsilon, cfg.exact_hit_tolerance)
    mapped = round_half_away(centers + wq).astype(np.int64)
    in_grid = (
        (mapped[:, 0] >= 0) & (mapped[:, 0] < w) & (mapped[:, 1] >= 0) & (mapped[:, 1] < h)
    )
    valid = in_grid.copy()
    valid[in_grid] = mask_src.cells[mapped[in_grid, 1], mapped[in_grid, 0]] == 1

    qx = centers[valid, 0].astype(int)
    qy = centers[valid, 1].astype(int)
    dst[qy, qx] = 1
    field[qy, qx] = wq[valid]
    present[qy, qx] = True
    source[qy, qx] = mapped[valid]
    return BinaryMask(dst), VectorField(field), Correspondence(present, source)
