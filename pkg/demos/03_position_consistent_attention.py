#!/usr/bin/env python3
"""Why re-encoded keys and the overlap mask matter, in raw attention logits."""

import numpy as np

from dragkit import (
    BinaryMask,
    NEG_BIAS,
    RopeTable,
    VectorField,
    apply_rope,
    build_overlap_mask,
    grid_positions,
    re_encode_reference_keys,
)

rng = np.random.default_rng(42)
h, w = 6, 6
table = RopeTable(d_head=8)

# rotary scores depend only on relative position
q = rng.standard_normal((1, 1, 8))
k = rng.standard_normal((1, 1, 8))
for offset in ((0, 0), (3, 1), (10, 7)):
    qe = apply_rope(q, np.array([[2 + offset[0], 2 + offset[1]]], float), table)[0, 0]
    ke = apply_rope(k, np.array([[4 + offset[0], 5 + offset[1]]], float), table)[0, 0]
    print(f"offset {offset}: score {qe @ ke:+.6f}")
print("(identical: only the separation between query and key matters)\n")

# content dragged from p=(1,2) to q=(4,2): re-encode the key at p with q's phases
k0 = rng.standard_normal((h * w, 1, 8))
field = np.zeros((h, w, 2))
field[2, 4] = (-3.0, 0.0)
mask_dst = BinaryMask.from_cells(w, h, [(4, 2)])
keys_plain = apply_rope(k0, grid_positions(h, w), table)
keys_fixed = re_encode_reference_keys(k0, VectorField(field), mask_dst, table)

query_at_dst = apply_rope(rng.standard_normal((1, 1, 8)), np.array([[2.0, 4.0]]), table)[0, 0]
slot = 2 * w + 1  # grid slot of the source cell p
print("query at the destination cell attends to the dragged key:")
print(f"  plain key (still encoded at p):    {query_at_dst @ keys_plain[slot, 0]:+.4f}")
print(f"  re-encoded key (phases of q):      {query_at_dst @ keys_fixed[slot, 0]:+.4f}")
same_content_at_q = apply_rope(k0[slot : slot + 1], np.array([[2.0, 4.0]]), table)[0, 0]
print(f"  same content physically at q:      {query_at_dst @ same_content_at_q:+.4f}")
print("(re-encoding makes the moved content score as if it already lived at q)\n")

# the overlap mask silences reference keys that would collide at the destination
mask_src = BinaryMask.from_cells(w, h, [(1, 2), (2, 2)])
att_mask = build_overlap_mask(mask_src, mask_dst, txt_len=0, tgt_len=h * w)
ref = att_mask.bias[h * w :].reshape(h, w)
print("reference-key bias row (x = excluded, o = kept):")
for y in range(h):
    print("  " + "".join("x" if ref[y, x] == NEG_BIAS else "o" for x in range(w)))
print("kept cells are exactly the source region minus the destination region")
