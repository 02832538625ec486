"""Deterministic toy transformer stack for exercising the drag mechanism.

No denoiser or sampler exists here: "steps" iterate the mechanism over fixed
synthetic tokens so the schedule, injection, and masking logic can be traced
and tested exactly. Identical (config, drag) inputs produce bit-identical
traces.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .attention import (
    AttentionMask,
    MaskPolicy,
    RopeTable,
    TokenTensor,
    apply_rope,
    build_overlap_mask,
    grid_positions,
    joint_attention,
    re_encode_reference_keys,
)
from .errors import ShapeMismatch
from .injection import FeatureGrid, InjectionConfig, blend, lambda_at, warp_reference
from .lrm import BinaryMask, Correspondence, LrmConfig, VectorField, reverse_map

__all__ = [
    "GOLDEN",
    "HarnessConfig",
    "DragOutputs",
    "BlockRecord",
    "RunTrace",
    "stream_values",
    "synth_tokens",
    "run_mechanism",
]

# splitmix64 constants; stream_values documents the full generator recipe
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def stream_values(seed: int, stream: int, count: int) -> np.ndarray:
    """Counter-based pseudo-random values in [-1, 1), splitmix64 flavor.

    Value i of a stream is
    ``mix64(mix64(seed + stream * GOLDEN) + (i + 1) * GOLDEN)`` in 64-bit
    wrapping arithmetic, where mix64 is the splitmix64 finalizer
    (xor-shift 30, * 0xBF58476D1CE4E5B9, xor-shift 27, * 0x94D049BB133111EB,
    xor-shift 31). The top 53 bits map to [0, 1), then to [-1, 1).
    """
    with np.errstate(over="ignore"):
        base = _mix64(np.uint64((seed + stream * GOLDEN) % 2**64))
        counters = base + np.arange(1, count + 1, dtype=np.uint64) * np.uint64(GOLDEN)
        bits = _mix64(counters)
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53 * 2.0 - 1.0


@dataclass
class HarnessConfig:
    grid: tuple[int, int]  # (height, width) of the token grid
    d_model: int = 32
    n_heads: int = 4
    num_blocks: int = 8
    txt_len: int = 4
    seed: int = 0
    injection: InjectionConfig | None = None  # default: the later half of the blocks
    rope_base: float = 10000.0
    rope_axes: str = "yx"
    mask_policy: MaskPolicy = MaskPolicy.VERBATIM
    oam_all_blocks: bool = True  # overlap mask at every block
    re_rope_all_blocks: bool = False  # key re-encoding only in injected blocks
    residual_scale: float = 0.5  # block-to-block mixing constant
    guidance_scale: float = 3.0  # recorded for fidelity; no sampler runs here
    scheduler: str = "FlowMatchEulerDiscrete"  # recorded; unused

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.d_head % 4 != 0:
            raise ValueError(f"d_head {self.d_head} must be divisible by 4")
        if self.injection is None:
            self.injection = InjectionConfig(
                block_subset=frozenset(range(self.num_blocks // 2, self.num_blocks))
            )
        if any(not 0 <= b < self.num_blocks for b in self.injection.block_subset):
            raise ValueError("block_subset outside [0, num_blocks)")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def rope_table(self) -> RopeTable:
        return RopeTable(self.d_head, self.rope_base, self.rope_axes)

    def describe(self) -> dict:
        inj = self.injection
        return {
            "grid": list(self.grid),
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "num_blocks": self.num_blocks,
            "txt_len": self.txt_len,
            "seed": self.seed,
            "schedule": asdict(inj.schedule),
            "block_subset": sorted(inj.block_subset),
            "injection_enabled": inj.enabled,
            "rope_base": self.rope_base,
            "rope_axes": self.rope_axes,
            "mask_policy": self.mask_policy.value,
            "oam_all_blocks": self.oam_all_blocks,
            "re_rope_all_blocks": self.re_rope_all_blocks,
            "residual_scale": self.residual_scale,
            "guidance_scale": self.guidance_scale,
            "scheduler": self.scheduler,
        }


@dataclass(eq=False)
class DragOutputs:
    """Everything the mechanism needs from a resolved drag."""

    mask_src: BinaryMask
    mask_dst: BinaryMask
    field: VectorField
    corr: Correspondence

    @classmethod
    def compute(cls, mask_src: BinaryMask, pairs, cfg: LrmConfig | None = None) -> "DragOutputs":
        return cls(mask_src, *reverse_map(mask_src, pairs, cfg))


@dataclass(frozen=True)
class BlockRecord:
    step: int
    block: int
    lam: float
    injected: bool
    blend_delta_inside: float
    blend_delta_outside: float
    masked_key_mass: float


@dataclass(eq=False)
class RunTrace:
    records: list[BlockRecord]
    final_tgt: np.ndarray  # (h, w, d_model)
    config: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "records": [asdict(r) for r in self.records],
            "final_tgt": self.final_tgt.tolist(),
        }

    def same_mechanism(self, other: "RunTrace") -> bool:
        """Equality of the mechanism's outputs, ignoring the config echo."""
        return self.records == other.records and np.array_equal(self.final_tgt, other.final_tgt)


def synth_tokens(cfg: HarnessConfig):
    """Deterministic Q/K/V token tensors plus the pre-rotary reference keys.

    Stream layout: tensor (q=0, k=1, v=2) x segment (txt=0, tgt=1, ref=2)
    gives stream id ``tensor * 3 + segment``; elements fill each segment
    array in C order.
    """
    h, w = cfg.grid

    def segment(tensor_idx: int, segment_idx: int, length: int) -> np.ndarray:
        n = length * cfg.n_heads * cfg.d_head
        vals = stream_values(cfg.seed, tensor_idx * 3 + segment_idx, n)
        return vals.reshape(length, cfg.n_heads, cfg.d_head)

    tensors = []
    for tensor_idx in range(3):
        tensors.append(
            TokenTensor(
                segment(tensor_idx, 0, cfg.txt_len),
                segment(tensor_idx, 1, h * w),
                segment(tensor_idx, 2, h * w),
                (h, w),
            )
        )
    q, k, v = tensors
    return q, k, v, k.ref.copy()


def run_mechanism(cfg: HarnessConfig, drag: DragOutputs) -> RunTrace:
    """Iterate the full mechanism across steps and blocks, recording a trace.

    Every step restarts from the synthetic tokens; within a step, block b+1
    sees ``x + residual_scale * output`` of block b for queries and
    pre-rotary keys (values stay fixed so outputs remain bounded). The target
    output fed forward is the post-blend one.
    """
    h, w = cfg.grid
    for part, name in (
        (drag.mask_src.cells.shape, "mask_src"),
        (drag.mask_dst.cells.shape, "mask_dst"),
        ((drag.field.height, drag.field.width), "field"),
        ((drag.corr.height, drag.corr.width), "corr"),
    ):
        if tuple(part) != (h, w):
            raise ShapeMismatch(f"{name} dims {part} do not match grid {(h, w)}")

    inj = cfg.injection
    schedule = inj.schedule
    table = cfg.rope_table()
    txt_pos = np.zeros((cfg.txt_len, 2))
    gpos = grid_positions(h, w)
    overlap = build_overlap_mask(
        drag.mask_src, drag.mask_dst, cfg.txt_len, h * w, cfg.mask_policy
    )
    no_mask = AttentionMask.all_zero(cfg.txt_len, h * w, h * w)
    q_init, k_init, v, _ = synth_tokens(cfg)

    records: list[BlockRecord] = []
    final = None
    for step in range(schedule.total_steps):
        lam = lambda_at(schedule, step)
        q0, k0 = q_init, k_init
        for block in range(cfg.num_blocks):
            in_subset = block in inj.block_subset
            inject_here = inj.enabled and in_subset
            re_rope_here = inj.enabled and (cfg.re_rope_all_blocks or in_subset)
            mask = overlap if (cfg.oam_all_blocks or in_subset) else no_mask

            q_enc = TokenTensor(
                apply_rope(q0.txt, txt_pos, table),
                apply_rope(q0.tgt, gpos, table),
                apply_rope(q0.ref, gpos, table),
                (h, w),
            )
            if re_rope_here:
                k_ref = re_encode_reference_keys(k0.ref, drag.field, drag.mask_dst, table)
            else:
                k_ref = apply_rope(k0.ref, gpos, table)
            k_enc = TokenTensor(
                apply_rope(k0.txt, txt_pos, table),
                apply_rope(k0.tgt, gpos, table),
                k_ref,
                (h, w),
            )
            attn, weights = joint_attention(q_enc, k_enc, v, mask, return_weights=True)
            masked_mass = float(weights[:, :, ~mask.keep].sum())

            o_tgt = attn.tgt.reshape(h, w, cfg.d_model)
            if inject_here:
                o_ref = attn.ref.reshape(h, w, cfg.d_model)
                warped = warp_reference(FeatureGrid(o_ref), drag.corr)
                o_hat = blend(FeatureGrid(o_tgt), warped, drag.mask_dst, lam).values
            else:
                o_hat = o_tgt
            delta = np.abs(o_hat - o_tgt).max(axis=2)
            inside = drag.mask_dst.cells.astype(bool)
            records.append(
                BlockRecord(
                    step=step,
                    block=block,
                    lam=lam,
                    injected=inject_here,
                    blend_delta_inside=float(delta[inside].max()) if inside.any() else 0.0,
                    blend_delta_outside=float(delta[~inside].max()) if (~inside).any() else 0.0,
                    masked_key_mass=masked_mass,
                )
            )

            o_hat_seq = o_hat.reshape(h * w, cfg.n_heads, cfg.d_head)
            s = cfg.residual_scale
            q0 = TokenTensor(
                q0.txt + s * attn.txt, q0.tgt + s * o_hat_seq, q0.ref + s * attn.ref, (h, w)
            )
            k0 = TokenTensor(
                k0.txt + s * attn.txt, k0.tgt + s * o_hat_seq, k0.ref + s * attn.ref, (h, w)
            )
            final = o_hat
    return RunTrace(records, final, cfg.describe())
