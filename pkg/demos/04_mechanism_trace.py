#!/usr/bin/env python3
"""Run the full mechanism on the toy transformer and read its trace."""

from dragkit import (
    BinaryMask,
    DragOutputs,
    DragPair,
    HarnessConfig,
    InjectionConfig,
    LambdaSchedule,
    Point2,
    run_mechanism,
)

mask_src = BinaryMask.from_cells(12, 6, [(2, 2), (3, 2), (4, 2)])
drag = DragOutputs.compute(mask_src, [DragPair(Point2(3, 2), Point2(6, 2))])

cfg = HarnessConfig(
    grid=(6, 12),
    num_blocks=4,
    seed=7,
    injection=InjectionConfig(
        schedule=LambdaSchedule(total_steps=6, hold_until=2, zero_from=4),
        block_subset=frozenset({2, 3}),  # inject only in the later blocks
    ),
)
trace = run_mechanism(cfg, drag)

print("step block   lam    injected  delta(in)   delta(out)  masked-mass")
for rec in trace.records:
    print(
        f"{rec.step:4d} {rec.block:5d}  {rec.lam:5.3f}  {str(rec.injected):8s}"
        f"  {rec.blend_delta_inside:10.3e}  {rec.blend_delta_outside:9.1e}"
        f"  {rec.masked_key_mass:9.1e}"
    )

print("\nwhat to notice:")
print(" - lam follows the hold/cosine/zero schedule, identically at every block")
print(" - blend deltas are zero at non-injected blocks and outside the mask always")
print(" - excluded reference keys never receive any attention mass")
print(" - once lam reaches zero the injection is a pure reference copy; the")
print("   delta(in) column then reports how far the target output drifted")

again = run_mechanism(cfg, drag)
print("\nre-run is bit-identical:", trace.to_dict() == again.to_dict())
