"""Codecs, spec documents, pixel/token mapping, preview, overlay, bundles."""

import base64
import io
import json

import numpy as np
import pytest
from PIL import Image

from dragkit import BinaryMask, Correspondence, MalformedSpec, MaskSizeMismatch, ShapeMismatch, VectorField
from dragkit.formats import (
    OverlayLayers,
    canonical_json_bytes,
    compute_bundle,
    corr_to_dict,
    decode_image,
    mask_rle,
    parse_drag_spec,
    pixels_to_tokens,
    preview_warp,
    read_field_file,
    read_pnm,
    render_overlay,
    spec_to_dict,
    write_bundle,
    write_field_file,
    write_pgm,
    write_ppm,
)
from tests.conftest import fixture_image, fixture_mask, fixture_spec_doc


# --- image codecs -----------------------------------------------------------


def test_pgm_round_trip():
    rng = np.random.default_rng(0)
    arr = rng.integers(0, 256, (7, 11), dtype=np.uint8)
    assert np.array_equal(read_pnm(write_pgm(arr)), arr)


def test_ppm_round_trip():
    rng = np.random.default_rng(1)
    arr = rng.integers(0, 256, (5, 4, 3), dtype=np.uint8)
    assert np.array_equal(read_pnm(write_ppm(arr)), arr)


def test_pgm_header_comments():
    data = b"P5\n# a comment\n3 2\n# another\n255\n" + bytes(6)
    assert read_pnm(data).shape == (2, 3)


def test_pnm_rejects_bad_input():
    with pytest.raises(MalformedSpec):
        read_pnm(b"P3\n1 1\n255\n0")
    with pytest.raises(MalformedSpec):
        read_pnm(b"P5\n2 2\n255\n" + bytes(3))  # short payload
    with pytest.raises(MalformedSpec):
        read_pnm(b"P5\n2 2\n65535\n" + bytes(8))


def test_decode_png_via_pillow():
    rng = np.random.default_rng(2)
    arr = rng.integers(0, 256, (6, 9), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    assert np.array_equal(decode_image(buf.getvalue(), grayscale=True), arr)
    with pytest.raises(MalformedSpec):
        decode_image(b"not an image at all")
    with pytest.raises(MalformedSpec):
        decode_image(b"")


# --- field file ---------------------------------------------------------------


def test_field_file_round_trip_bit_exact():
    rng = np.random.default_rng(3)
    field = rng.standard_normal((4, 6, 2)).astype(np.float32)
    data = write_field_file(field)
    assert data[:4] == b"DKF1"
    back = read_field_file(data)
    assert back.dtype == np.float32
    assert np.array_equal(back, field)
    assert np.array_equal(write_field_file(back), data)


def test_field_file_layout_is_little_endian():
    field = np.zeros((1, 2, 2), dtype=np.float32)
    field[0, 0, 0] = 1.0
    data = write_field_file(field)
    # header: width=2, height=1, channels=2 as little-endian u32
    assert data[4:16] == b"\x02\x00\x00\x00\x01\x00\x00\x00\x02\x00\x00\x00"
    assert data[16:20] == b"\x00\x00\x80\x3f"  # 1.0f LE


def test_field_file_rejects_garbage():
    with pytest.raises(MalformedSpec):
        read_field_file(b"NOPE" + bytes(12))
    with pytest.raises(MalformedSpec):
        read_field_file(b"DKF1" + b"\x01\x00\x00\x00" * 3 + bytes(2))


# --- rle / canonical json ---------------------------------------------------


def test_mask_rle_runs():
    mask = BinaryMask(np.array([[1, 1, 0], [0, 1, 1]], dtype=np.uint8))
    assert mask_rle(mask) == {"width": 3, "height": 2, "runs": [[0, 2], [4, 2]]}
    empty = BinaryMask(np.zeros((2, 2), dtype=np.uint8))
    assert mask_rle(empty)["runs"] == []


def test_canonical_json_is_sorted_and_stable():
    a = canonical_json_bytes({"b": 1, "a": [1.5, 2]})
    assert a == b'{"a":[1.5,2],"b":1}\n'
    assert canonical_json_bytes(json.loads(a)) == a


# --- spec documents -------------------------------------------------------------


def test_spec_parse_serialize_fixed_point():
    doc = fixture_spec_doc("mask.pgm")
    spec = parse_drag_spec(doc)
    full = spec_to_dict(spec)
    again = spec_to_dict(parse_drag_spec(full))
    assert again == full
    assert canonical_json_bytes(again) == canonical_json_bytes(full)


def test_spec_zero_drag_pairs_become_anchors():
    doc = fixture_spec_doc("mask.pgm")
    doc["pairs"] = [{"source": [48, 32], "target": [48, 32]}]
    spec = parse_drag_spec(doc)
    _, pairs, _ = pixels_to_tokens(spec, mask_pixels=fixture_mask())
    assert pairs[0].anchor


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("image"),
        lambda d: d.pop("pairs"),
        lambda d: d.pop("mask"),
        lambda d: d.update(pairs=[]),
        lambda d: d.update(downscale_factor=0),
        lambda d: d.update(downscale_factor="16"),
        lambda d: d.update(pairs=[{"source": [9999, 0], "target": [0, 0]}]),
        lambda d: d.update(pairs=[{"source": [0, 0]}]),
        lambda d: d.update(lrm={"epsilon": -1}),
        lambda d: d.update(lrm={"unknown_knob": 1}),
        lambda d: d.update(injection={"hold_until": 99}),
        lambda d: d.update(injection={"block_subset": [-1]}),
        lambda d: d.update(mask_policy="nonsense"),
        lambda d: d.update(image={"width_px": 0, "height_px": 5}),
    ],
)
def test_spec_validation_rejects(mutate):
    doc = fixture_spec_doc("mask.pgm")
    mutate(doc)
    with pytest.raises(MalformedSpec):
        parse_drag_spec(doc)


def test_mask_loading_paths_and_data_urls(tmp_path):
    doc = fixture_spec_doc("mask.pgm")
    (tmp_path / "mask.pgm").write_bytes(write_pgm(fixture_mask()))
    spec = parse_drag_spec(doc, base_dir=tmp_path)
    assert np.array_equal(spec.load_mask_pixels(), fixture_mask())
    # inline data URL
    payload = base64.b64encode(write_pgm(fixture_mask())).decode()
    doc["mask"] = "data:image/x-portable-graymap;base64," + payload
    inline = parse_drag_spec(doc)
    assert np.array_equal(inline.load_mask_pixels(allow_paths=False), fixture_mask())
    # a path is refused when paths are not allowed
    with pytest.raises(MalformedSpec):
        spec.load_mask_pixels(allow_paths=False)
    # missing file
    missing = parse_drag_spec(fixture_spec_doc("nope.pgm"), base_dir=tmp_path)
    with pytest.raises(MalformedSpec):
        missing.load_mask_pixels()


def test_mask_size_mismatch(tmp_path):
    bad = np.zeros((10, 10), dtype=np.uint8)
    (tmp_path / "mask.pgm").write_bytes(write_pgm(bad))
    spec = parse_drag_spec(fixture_spec_doc("mask.pgm"), base_dir=tmp_path)
    with pytest.raises(MaskSizeMismatch):
        spec.load_mask_pixels()


# --- pixel <-> token -------------------------------------------------------------


def test_grid_is_ceil_division():
    doc = {
        "image": {"width_px": 1024, "height_px": 1024},
        "downscale_factor": 16,
        "pairs": [{"source": [160, 48], "target": [256, 48]}],
        "mask": "x",
    }
    spec = parse_drag_spec(doc)
    mask = np.full((1024, 1024), 255, dtype=np.uint8)
    grid, pairs, token_mask = pixels_to_tokens(spec, mask_pixels=mask)
    assert grid == (64, 64)
    assert (pairs[0].source.x, pairs[0].source.y) == (10.0, 3.0)
    assert token_mask.count == 64 * 64  # all-inside mask sets every cell
    # ragged edges round up
    doc["image"] = {"width_px": 100, "height_px": 33}
    doc["pairs"] = [{"source": [0, 0], "target": [10, 10]}]
    spec = parse_drag_spec(doc)
    grid, _, _ = pixels_to_tokens(spec, mask_pixels=np.zeros((33, 100), dtype=np.uint8))
    assert grid == (3, 7)


def test_mask_pooling_majority_vote():
    doc = {
        "image": {"width_px": 8, "height_px": 4},
        "downscale_factor": 4,
        "pairs": [{"source": [0, 0], "target": [1, 1]}],
        "mask": "x",
    }
    spec = parse_drag_spec(doc)
    mask = np.zeros((4, 8), dtype=np.uint8)
    mask[:, 0:2] = 255  # cell 0 half covered -> >= 50% counts as inside
    mask[0, 4] = 255  # cell 1: 1/16 inside -> outside
    _, _, token_mask = pixels_to_tokens(spec, mask_pixels=mask)
    assert token_mask.cells.tolist() == [[1, 0]]


def test_fixture_tokenization():
    spec = parse_drag_spec(fixture_spec_doc("mask.pgm"))
    grid, pairs, token_mask = pixels_to_tokens(spec, mask_pixels=fixture_mask())
    assert grid == (6, 12)
    assert token_mask.set_cells() == [(2, 2), (3, 2), (4, 2)]
    assert (pairs[0].source.x, pairs[0].source.y) == (3.0, 2.0)
    assert (pairs[0].target.x, pairs[0].target.y) == (6.0, 2.0)


# --- preview warp ---------------------------------------------------------------


def test_preview_identity_and_empty_leave_image_alone():
    image = fixture_image()
    full = BinaryMask(np.ones((6, 12), dtype=np.uint8))
    ident = Correspondence.identity(full)
    assert np.array_equal(preview_warp(image, ident, 16), image)
    none = Correspondence.identity(BinaryMask(np.zeros((6, 12), dtype=np.uint8)))
    assert np.array_equal(preview_warp(image, none, 16), image)


def test_preview_single_block_copy():
    image = fixture_image()
    present = np.zeros((6, 12), dtype=bool)
    source = np.full((6, 12, 2), -1, dtype=np.int32)
    present[2, 7] = True
    source[2, 7] = (1, 4)  # copy block (1,4) -> (7,2)
    out = preview_warp(image, Correspondence(present, source), 16)
    assert np.array_equal(out[32:48, 112:128], image[64:80, 16:32])
    untouched = out.copy()
    untouched[32:48, 112:128] = image[32:48, 112:128]
    assert np.array_equal(untouched, image)


def test_preview_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        preview_warp(
            fixture_image(),
            Correspondence.identity(BinaryMask(np.ones((3, 3), dtype=np.uint8))),
            16,
        )


# --- overlay ---------------------------------------------------------------------


def test_overlay_no_layers_is_identity():
    rgb = np.dstack([fixture_image()] * 3)
    out = render_overlay(rgb, OverlayLayers(), 16)
    assert np.array_equal(out, rgb)


def test_overlay_deterministic_and_markers():
    image = fixture_image()
    mask_src = BinaryMask.from_cells(12, 6, [(2, 2), (3, 2)])
    mask_dst = BinaryMask.from_cells(12, 6, [(5, 2), (6, 2)])
    field = np.zeros((6, 12, 2))
    field[2, 5] = (-3.0, 0.0)
    layers = OverlayLayers(
        mask_src=mask_src,
        mask_dst=mask_dst,
        field=VectorField(field),
        pairs=[((48.0, 32.0), (96.0, 32.0))],
    )
    a = render_overlay(image, layers, 16)
    b = render_overlay(image, layers, 16)
    assert np.array_equal(a, b)
    assert a.tobytes() == b.tobytes()
    # discs: source red at (48,32), target blue at (96,32)
    assert a[32, 48].tolist() == [255, 0, 0]
    assert a[32, 96].tolist() == [0, 0, 255]
    # tinted source cell differs from the untinted base
    assert not np.array_equal(a[34, 40], np.repeat(image[34, 40], 3))


def test_overlay_stride_thins_arrows():
    image = np.zeros((64, 64), dtype=np.uint8)
    field = np.zeros((4, 4, 2))
    field[1, 1] = field[1, 2] = (1.0, 0.0)
    dense = render_overlay(image, OverlayLayers(field=VectorField(field)), 16, stride=1)
    sparse = render_overlay(image, OverlayLayers(field=VectorField(field)), 16, stride=2)
    assert (dense == np.array([255, 255, 0])).all(axis=2).sum() > (
        sparse == np.array([255, 255, 0])
    ).all(axis=2).sum()


# --- bundles ------------------------------------------------------------------------


def test_compute_bundle_fixture(tmp_path):
    (tmp_path / "mask.pgm").write_bytes(write_pgm(fixture_mask()))
    spec = parse_drag_spec(fixture_spec_doc("mask.pgm"), base_dir=tmp_path)
    bundle = compute_bundle(spec, fixture_image())
    assert bundle.grid == (6, 12)
    assert bundle.mask_dst.set_cells() == [(5, 2), (6, 2), (7, 2)]
    assert bundle.summary["reachability"] == [True]
    assert bundle.summary["mask_src_rle"]["runs"] == [[26, 3]]
    assert bundle.summary["mask_dst_rle"]["runs"] == [[29, 3]]
    assert corr_to_dict(bundle.corr)["entries"][0] == {"dst": [5, 2], "src": [2, 2]}


def test_write_bundle_is_byte_deterministic(tmp_path):
    (tmp_path / "mask.pgm").write_bytes(write_pgm(fixture_mask()))
    spec = parse_drag_spec(fixture_spec_doc("mask.pgm"), base_dir=tmp_path)
    for sub in ("a", "b"):
        write_bundle(tmp_path / sub, compute_bundle(spec, fixture_image()))
    files_a = sorted((tmp_path / "a").iterdir())
    files_b = sorted((tmp_path / "b").iterdir())
    assert [f.name for f in files_a] == [f.name for f in files_b]
    for fa, fb in zip(files_a, files_b):
        assert fa.read_bytes() == fb.read_bytes()


def test_compute_bundle_rejects_wrong_image(tmp_path):
    (tmp_path / "mask.pgm").write_bytes(write_pgm(fixture_mask()))
    spec = parse_drag_spec(fixture_spec_doc("mask.pgm"), base_dir=tmp_path)
    with pytest.raises(MalformedSpec):
        compute_bundle(spec, np.zeros((10, 10), dtype=np.uint8))
