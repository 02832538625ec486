#!/usr/bin/env python3
"""Blend-coefficient schedule and warped-feature injection, cell by cell."""

import numpy as np

from dragkit import (
    BinaryMask,
    DragPair,
    FeatureGrid,
    LambdaSchedule,
    Point2,
    blend,
    lambda_at,
    reverse_map,
    warp_reference,
)

# the coefficient holds, decays along a half cosine, then stays at zero
sched = LambdaSchedule()  # 30 steps, hold through 9, zero from 20
print("step :", "  ".join(f"{s:5d}" for s in range(0, 30, 3)))
print("lam  :", "  ".join(f"{lambda_at(sched, s):5.3f}" for s in range(0, 30, 3)))

bar = "".join("#" if lambda_at(sched, s) > 0.25 else "-" for s in range(30))
print("      " + bar + "   (# = strong injection)")

# move a 3-cell strip right by 3; warp then blend reference features into it
mask_src = BinaryMask.from_cells(12, 4, [(2, 1), (3, 1), (4, 1)])
pairs = [DragPair(Point2(3, 1), Point2(6, 1))]
mask_dst, field, corr = reverse_map(mask_src, pairs)

rng = np.random.default_rng(0)
o_ref = FeatureGrid(np.round(rng.uniform(1, 9, (4, 12, 1))))
o_tgt = FeatureGrid(np.zeros((4, 12, 1)))

warped = warp_reference(o_ref, corr)
print("\nreference features (row 1):", o_ref.values[1, :, 0])
print("warped into destination:   ", warped.values[1, :, 0])
print("(each destination cell copied its source cell's value, no interpolation)")

for step in (0, 15, 25):
    lam = lambda_at(sched, step)
    out = blend(o_tgt, warped, mask_dst, lam)
    print(f"\nstep {step:2d} (lam={lam:4.2f}) blended row 1:", out.values[1, :, 0])
print("\noutside the destination mask the target row is untouched at every step")
