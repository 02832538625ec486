#!/usr/bin/env python3
"""Walk through the drag-field pipeline on a small token grid.

A source region and one control-point pair go in; the coarse target, the
validated destination mask, the inverse displacement field, and the per-cell
correspondences come out.
"""

import numpy as np

from dragkit import (
    BinaryMask,
    DragPair,
    LrmConfig,
    Point2,
    build_coarse_target,
    forward_displacement,
    reverse_displacement,
    reverse_map,
)


def show(mask, title):
    print(f"\n{title}")
    for row in mask.cells:
        print("  " + "".join("#" if c else "." for c in row))


# a 5x3 blob on a 16x8 grid, dragged 6 cells to the right and 2 down
grid = np.zeros((8, 16), dtype=np.uint8)
grid[1:4, 2:7] = 1
mask_src = BinaryMask(grid)
pairs = [DragPair(Point2(4, 2), Point2(10, 4))]

show(mask_src, "source region")
print("\ndrag pair: (4,2) -> (10,4), vector", pairs[0].vector)

# the forward field moves source content; at the handle it is exact
print("forward displacement at the handle:", forward_displacement(Point2(4, 2), pairs))
print("forward displacement a bit away:  ", forward_displacement(Point2(2, 1), pairs))

# the reverse field looks up where destination content came from
print("reverse displacement at the target:", reverse_displacement(Point2(10, 4), pairs))

coarse = build_coarse_target(mask_src, pairs, LrmConfig())
show(coarse, "coarse target (hull of displaced cells + 1-cell dilation)")

mask_dst, field, corr = reverse_map(mask_src, pairs)
show(mask_dst, "validated destination (reverse-mapped into the source mask)")

print("\nsample correspondences (destination <- source):")
for (q, p) in corr.entries()[:6]:
    print(f"  {q} <- {p}")
print(f"  ... {len(corr.entries())} cells total")

# discarded candidates: coarse cells whose reverse lookup left the source
discarded = int(coarse.count - mask_dst.count)
print(f"\n{discarded} coarse cells were discarded by source-membership validation")
