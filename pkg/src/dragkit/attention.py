"""Joint attention over [text, target, reference] token segments.

Queries and keys carry 2-D axial rotary phases; reference keys can be
re-encoded with the phases of the destination cell they were dragged to, and
an additive mask excludes the reference keys that would interfere there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import MissingPosition, NonFiniteInput, ShapeMismatch
from .lrm import BinaryMask, VectorField, round_half_away

__all__ = [
    "NEG_BIAS",
    "TokenTensor",
    "RopeTable",
    "AttentionMask",
    "MaskPolicy",
    "grid_positions",
    "apply_rope",
    "re_encode_reference_keys",
    "build_overlap_mask",
    "joint_attention",
]

# Finite stand-in for -inf; exp(NEG_BIAS - rowmax) underflows to exactly 0.0.
NEG_BIAS = -1e9


def grid_positions(height: int, width: int) -> np.ndarray:
    """Row-major (y, x) coordinates of every grid cell, shape (h*w, 2)."""
    ys, xs = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return np.stack([ys.ravel(), xs.ravel()], axis=1).astype(np.float64)


@dataclass(eq=False)
class TokenTensor:
    """Segmented feature sequence: text, target grid, reference grid.

    Segment arrays are (length, n_heads, d_head); target and reference cover
    the token grid row-major, text tokens carry no grid position.
    """

    txt: np.ndarray
    tgt: np.ndarray
    ref: np.ndarray
    grid: tuple[int, int]  # (height, width)

    def __post_init__(self):
        self.txt = np.asarray(self.txt, dtype=np.float64)
        self.tgt = np.asarray(self.tgt, dtype=np.float64)
        self.ref = np.asarray(self.ref, dtype=np.float64)
        h, w = self.grid
        if self.txt.ndim != 3 or self.tgt.ndim != 3 or self.ref.ndim != 3:
            raise ValueError("segments must be (length, n_heads, d_head)")
        if self.txt.shape[1:] != self.tgt.shape[1:] or self.tgt.shape[1:] != self.ref.shape[1:]:
            raise ShapeMismatch("segments disagree on head layout")
        if self.tgt.shape[0] != h * w or self.ref.shape[0] != h * w:
            raise ShapeMismatch(
                f"grid segments must hold {h * w} tokens, got {self.tgt.shape[0]}/{self.ref.shape[0]}"
            )
        if self.d_head % 4 != 0:
            raise ValueError(f"d_head must be divisible by 4, got {self.d_head}")

    @property
    def n_heads(self) -> int:
        return self.txt.shape[1]

    @property
    def d_head(self) -> int:
        return self.txt.shape[2]

    @property
    def txt_len(self) -> int:
        return self.txt.shape[0]

    def positions(self) -> np.ndarray:
        return grid_positions(*self.grid)

    def concat(self) -> np.ndarray:
        return np.concatenate([self.txt, self.tgt, self.ref], axis=0)


@dataclass(frozen=True)
class RopeTable:
    """Axial rotary phases: the first half of the pairs follows y, the second x.

    Pair j of an axis rotates by coord * base**(-2j / (d_head/2)); coordinate
    0 is the identity rotation.
    """

    d_head: int
    base: float = 10000.0
    axes: str = "yx"  # which coordinate drives the first rotary half

    def __post_init__(self):
        if self.d_head % 4 != 0:
            raise ValueError(f"d_head must be divisible by 4, got {self.d_head}")
        if self.axes not in ("yx", "xy"):
            raise ValueError(f"axes must be 'yx' or 'xy', got {self.axes!r}")

    def angles(self, positions: np.ndarray) -> np.ndarray:
        """Per-token rotation angles, shape (L, d_head // 2)."""
        positions = np.asarray(positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise MissingPosition(f"positions must be (L, 2), got {positions.shape}")
        per_axis = self.d_head // 4
        freqs = self.base ** (-2.0 * np.arange(per_axis) / (self.d_head // 2))
        first, second = (0, 1) if self.axes == "yx" else (1, 0)
        return np.concatenate(
            [positions[:, first, None] * freqs, positions[:, second, None] * freqs], axis=1
        )


def apply_rope(features: np.ndarray, positions: np.ndarray, table: RopeTable) -> np.ndarray:
    """Rotate every head vector's pairs by its token's axial phases.

    Pairs are adjacent components (2j, 2j+1); each rotation is orthonormal so
    head norms are preserved.
    """
    features = np.asarray(features, dtype=np.float64)
    if positions is None:
        raise MissingPosition("segment has no positions")
    positions = np.asarray(positions, dtype=np.float64)
    if len(positions) != len(features):
        raise MissingPosition(
            f"{len(features)} tokens but {len(positions)} positions"
        )
    if features.shape[-1] != table.d_head:
        raise ShapeMismatch(f"features d_head {features.shape[-1]} != table {table.d_head}")
    ang = table.angles(positions)  # (L, d_head//2)
    cos = np.cos(ang)[:, None, :]
    sin = np.sin(ang)[:, None, :]
    a = features[..., 0::2]
    b = features[..., 1::2]
    out = np.empty_like(features)
    out[..., 0::2] = a * cos - b * sin
    out[..., 1::2] = a * sin + b * cos
    return out


def re_encode_reference_keys(
    k0_ref: np.ndarray, field: VectorField, mask_dst: BinaryMask, table: RopeTable
) -> np.ndarray:
    """Rotate each dragged reference key with its destination cell's phases.

    A destination cell q with reverse-mapped source p donates its position to
    the key at grid slot p; every unclaimed key keeps standard rotary
    encoding at its own position. When several q claim one p, the smallest
    row-major q wins, so re-runs are bit-identical.
    """
    h, w = mask_dst.cells.shape
    if (field.height, field.width) != (h, w):
        raise ShapeMismatch(f"field {field.height}x{field.width} vs mask {h}x{w}")
    k0_ref = np.asarray(k0_ref, dtype=np.float64)
    if k0_ref.shape[0] != h * w:
        raise ShapeMismatch(f"reference keys must cover {h * w} grid slots, got {k0_ref.shape[0]}")

    positions = grid_positions(h, w)  # (h*w, 2) as (y, x)
    ys, xs = np.nonzero(mask_dst.cells)  # row-major destination cells
    if ys.size:
        centers = np.stack([xs, ys], axis=1).astype(np.float64)
        mapped = round_half_away(centers + field.vectors[ys, xs]).astype(np.int64)
        if (
            (mapped[:, 0] < 0).any()
            or (mapped[:, 0] >= w).any()
            or (mapped[:, 1] < 0).any()
            or (mapped[:, 1] >= h).any()
        ):
            raise ValueError("field maps a destination cell outside the grid")
        p_idx = mapped[:, 1] * w + mapped[:, 0]
        _, first = np.unique(p_idx, return_index=True)
        donor = ys[first] * w + xs[first]  # row-major index of the winning q
        positions = positions.copy()
        positions[p_idx[first]] = positions[donor]
    return apply_rope(k0_ref, positions, table)


class MaskPolicy(enum.Enum):
    """Which reference keys the overlap mask keeps."""

    VERBATIM = "verbatim"  # keep exactly (1 - M_DST) * M_SRC
    KEEP_BACKGROUND = "keep_background"  # exclude only M_DST cells outside M_SRC


@dataclass(eq=False)
class AttentionMask:
    """Additive bias over the concatenated key sequence: 0 kept, NEG_BIAS excluded."""

    txt_len: int
    tgt_len: int
    bias: np.ndarray

    def __post_init__(self):
        bias = np.asarray(self.bias, dtype=np.float64)
        if bias.ndim != 1 or len(bias) < self.txt_len + self.tgt_len:
            raise ShapeMismatch(f"bias length {bias.shape} too short for the segments")
        if bias[: self.txt_len + self.tgt_len].any():
            raise ValueError("text and target entries must be 0")
        ref = bias[self.txt_len + self.tgt_len :]
        if not np.isin(ref, (0.0, NEG_BIAS)).all():
            raise ValueError("reference entries must be 0 or NEG_BIAS")
        self.bias = bias

    @property
    def keep(self) -> np.ndarray:
        return self.bias == 0.0

    @classmethod
    def all_zero(cls, txt_len: int, tgt_len: int, ref_len: int) -> "AttentionMask":
        return cls(txt_len, tgt_len, np.zeros(txt_len + tgt_len + ref_len))


def build_overlap_mask(
    mask_src: BinaryMask,
    mask_dst: BinaryMask,
    txt_len: int,
    tgt_len: int,
    policy: MaskPolicy = MaskPolicy.VERBATIM,
) -> AttentionMask:
    """Bias row excluding the reference keys that collide with dragged content.

    Verbatim keeps a reference cell iff it is source material not covered by
    the destination region; keep_background only drops destination cells
    that were never source material.
    """
    if mask_src.cells.shape != mask_dst.cells.shape:
        raise ShapeMismatch(
            f"masks disagree: {mask_src.cells.shape} vs {mask_dst.cells.shape}"
        )
    src = mask_src.cells.astype(bool).ravel()
    dst = mask_dst.cells.astype(bool).ravel()
    if policy is MaskPolicy.VERBATIM:
        keep = ~dst & src
    else:
        keep = ~(dst & ~src)
    ref_bias = np.where(keep, 0.0, NEG_BIAS)
    return AttentionMask(txt_len, tgt_len, np.concatenate([np.zeros(txt_len + tgt_len), ref_bias]))


def joint_attention(
    q: TokenTensor,
    k: TokenTensor,
    v: TokenTensor,
    mask: AttentionMask,
    return_weights: bool = False,
):
    """Scaled softmax attention over the concatenated key sequence.

    All three query segments are computed with the same bias row; weights on
    excluded keys are forced to exactly zero after the softmax.
    """
    if q.grid != k.grid or k.grid != v.grid or q.txt_len != k.txt_len or k.txt_len != v.txt_len:
        raise ShapeMismatch("query/key/value segmentation disagrees")
    q_all = q.concat()
    k_all = k.concat()
    v_all = v.concat()
    if k_all.shape != v_all.shape or q_all.shape[1:] != k_all.shape[1:]:
        raise ShapeMismatch("query/key/value head layout disagrees")
    if len(mask.bias) != len(k_all):
        raise ShapeMismatch(f"mask covers {len(mask.bias)} keys, have {len(k_all)}")
    for arr in (q_all, k_all, v_all):
        if not np.isfinite(arr).all():
            raise NonFiniteInput("attention inputs must be finite")

    d_head = q.d_head
    qh = q_all.transpose(1, 0, 2)  # (n_heads, Lq, d_head)
    kh = k_all.transpose(1, 0, 2)
    vh = v_all.transpose(1, 0, 2)
    logits = qh @ kh.transpose(0, 2, 1) / np.sqrt(d_head) + mask.bias[None, None, :]
    logits -= logits.max(axis=2, keepdims=True)
    weights = np.exp(logits)
    weights[:, :, ~mask.keep] = 0.0
    weights /= weights.sum(axis=2, keepdims=True)
    out = (weights @ vh).transpose(1, 0, 2)

    t0, t1 = q.txt_len, q.txt_len + q.grid[0] * q.grid[1]
    result = TokenTensor(out[:t0], out[t0:t1], out[t1:], q.grid)
    if return_weights:
        return result, weights
    return result
