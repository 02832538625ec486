"""Reference-feature injection: schedule, warp-by-correspondence, and blend.

Warping is direct indexing only; a destination cell copies the reference
feature at its correspondence source, with no interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidLambda, InvalidStep, ShapeMismatch
from .lrm import BinaryMask, Correspondence

__all__ = [
    "FeatureGrid",
    "LambdaSchedule",
    "InjectionConfig",
    "lambda_at",
    "warp_reference",
    "blend",
]


@dataclass(eq=False)
class FeatureGrid:
    """Per-cell feature vectors, shape (height, width, dim)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"features must have shape (h, w, dim), got {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("features must be finite")
        self.values = v

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class LambdaSchedule:
    """Blend coefficient over steps: hold, cosine decay, then zero."""

    total_steps: int = 30
    hold_until: int = 10
    zero_from: int = 20
    lambda_init: float = 0.5

    def __post_init__(self):
        if not 0 <= self.hold_until <= self.zero_from <= self.total_steps:
            raise ValueError(
                f"need 0 <= hold_until <= zero_from <= total_steps, got "
                f"{self.hold_until}/{self.zero_from}/{self.total_steps}"
            )
        if not 0.0 <= self.lambda_init <= 1.0:
            raise ValueError(f"lambda_init must be in [0, 1], got {self.lambda_init}")


@dataclass(frozen=True)
class InjectionConfig:
    schedule: LambdaSchedule = field(default_factory=LambdaSchedule)
    block_subset: frozenset[int] = frozenset()
    enabled: bool = True


def lambda_at(schedule: LambdaSchedule, step: int) -> float:
    """Coefficient at `step`: lambda_init, a half-cosine ramp to 0, then 0."""
    if not 0 <= step < schedule.total_steps:
        raise InvalidStep(f"step {step} outside [0, {schedule.total_steps})")
    if step < schedule.hold_until:
        return schedule.lambda_init
    if step >= schedule.zero_from:
        return 0.0
    span = schedule.zero_from - schedule.hold_until
    phase = (step - schedule.hold_until) / span
    return schedule.lambda_init * 0.5 * (1.0 + math.cos(math.pi * phase))


def warp_reference(o_ref: FeatureGrid, corr: Correspondence) -> FeatureGrid:
    """Gather reference features at each cell's correspondence source.

    Cells with no correspondence come out zero; the blend's outside-mask
    branch is what restores the target features there.
    """
    if (o_ref.height, o_ref.width) != (corr.height, corr.width):
        raise ShapeMismatch(
            f"features {o_ref.height}x{o_ref.width} vs correspondence {corr.height}x{corr.width}"
        )
    out = np.zeros_like(o_ref.values)
    ys, xs = np.nonzero(corr.present)
    if ys.size:
        src = corr.source[ys, xs]  # (n, 2) as (x, y)
        out[ys, xs] = o_ref.values[src[:, 1], src[:, 0]]
    return FeatureGrid(out)


def blend(
    o_tgt: FeatureGrid, o_ref_warped: FeatureGrid, mask_dst: BinaryMask, lam: float
) -> FeatureGrid:
    """Mix warped reference into the target inside the mask; copy target outside.

    Inside: (1 - lam) * reference + lam * target. Outside cells are returned
    bit-for-bit from `o_tgt`.
    """
    shapes = {o_tgt.values.shape, o_ref_warped.values.shape}
    if len(shapes) != 1 or o_tgt.values.shape[:2] != mask_dst.cells.shape:
        raise ShapeMismatch(
            f"blend inputs disagree: {o_tgt.values.shape}, {o_ref_warped.values.shape}, "
            f"mask {mask_dst.cells.shape}"
        )
    if not 0.0 <= lam <= 1.0:
        raise InvalidLambda(f"lambda must be in [0, 1], got {lam}")
    out = o_tgt.values.copy()
    inside = mask_dst.cells.astype(bool)
    out[inside] = (1.0 - lam) * o_ref_warped.values[inside] + lam * o_tgt.values[inside]
    return FeatureGrid(out)
