"""Shared fixtures: the 3-cell translation scenario as on-disk files."""

import json
import socket
import threading
import time

import numpy as np
import pytest

from dragkit.formats import write_pgm

# pixel-space version of the canonical token fixture:
# 192x96 image, f=16 -> 12x6 grid; mask covers token cells (2..4, 2);
# one pair (48,32) -> (96,32) px, i.e. token (3,2) -> (6,2)
FIXTURE_W, FIXTURE_H, FIXTURE_F = 192, 96, 16


def fixture_image() -> np.ndarray:
    ys, xs = np.mgrid[0:FIXTURE_H, 0:FIXTURE_W]
    return ((xs + 2 * ys) % 256).astype(np.uint8)


def fixture_mask() -> np.ndarray:
    mask = np.zeros((FIXTURE_H, FIXTURE_W), dtype=np.uint8)
    mask[32:48, 32:80] = 255
    return mask


def fixture_spec_doc(mask_ref: str) -> dict:
    return {
        "image": {"width_px": FIXTURE_W, "height_px": FIXTURE_H},
        "downscale_factor": FIXTURE_F,
        "pairs": [{"source": [48, 32], "target": [96, 32]}],
        "mask": mask_ref,
    }


EXPECTED_CORR = {
    "width": 12,
    "height": 6,
    "entries": [
        {"dst": [5, 2], "src": [2, 2]},
        {"dst": [6, 2], "src": [3, 2]},
        {"dst": [7, 2], "src": [4, 2]},
    ],
}


@pytest.fixture
def fixture_dir(tmp_path):
    """Write the translation fixture to disk; returns the directory."""
    (tmp_path / "image.pgm").write_bytes(write_pgm(fixture_image()))
    (tmp_path / "mask.pgm").write_bytes(write_pgm(fixture_mask()))
    (tmp_path / "spec.json").write_text(json.dumps(fixture_spec_doc("mask.pgm")))
    return tmp_path


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def live_server(tmp_path):
    """A real uvicorn instance of the edit service; yields its base URL."""
    import httpx
    import uvicorn

    from dragkit.service import create_app

    port = free_port()
    config = uvicorn.Config(
        create_app(tmp_path / "data"), host="127.0.0.1", port=port, log_level="warning"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{port}"
    deadline = time.time() + 10
    while time.time() < deadline:
        try:
            if httpx.get(base + "/healthz", timeout=1).status_code == 200:
                break
        except httpx.HTTPError:
            time.sleep(0.05)
    else:
        raise RuntimeError("service did not come up")
    yield base
    server.should_exit = True
    thread.join(timeout=5)
