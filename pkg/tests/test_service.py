"""Edit service: sessions, edits, artifacts, concurrency, crash safety."""

import base64
import concurrent.futures
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dragkit.formats import write_pgm
from dragkit.service import SessionStore, create_app
from tests.conftest import EXPECTED_CORR, fixture_image, fixture_mask, fixture_spec_doc


def inline_mask(mask: np.ndarray) -> str:
    return "data:image/x-portable-graymap;base64," + base64.b64encode(
        write_pgm(mask)
    ).decode()


def service_spec_doc(pairs=None, mask=None) -> dict:
    doc = fixture_spec_doc(inline_mask(fixture_mask() if mask is None else mask))
    if pairs is not None:
        doc["pairs"] = pairs
    return doc


@pytest.fixture
def client(tmp_path):
    with TestClient(create_app(tmp_path / "data")) as c:
        yield c


def new_session(client, image=None) -> str:
    data = write_pgm(fixture_image() if image is None else image)
    resp = client.post("/sessions", content=data)
    assert resp.status_code == 201
    return resp.json()["id"]


def test_healthz(client):
    assert client.get("/healthz").json() == {"status": "ok"}


def test_create_session_and_distinct_ids(client):
    a, b = new_session(client), new_session(client)
    assert a != b


def test_create_session_rejects_bad_uploads(client):
    assert client.post("/sessions", content=b"").status_code == 415
    resp = client.post("/sessions", content=b"definitely not an image")
    assert resp.status_code == 415
    assert resp.json()["error"] == "UndecodableImage"


def test_create_session_rejects_oversize(client):
    big = np.zeros((4097, 4097), dtype=np.uint8)
    resp = client.post("/sessions", content=write_pgm(big))
    assert resp.status_code == 413
    assert resp.json()["error"] == "ImageTooLarge"


def test_edit_unknown_session_404(client):
    resp = client.post("/sessions/deadbeef/edit", json=service_spec_doc())
    assert resp.status_code == 404


def test_edit_zero_drag_identity(client):
    sid = new_session(client)
    doc = service_spec_doc(pairs=[{"source": [48, 32], "target": [48, 32]}])
    resp = client.post(f"/sessions/{sid}/edit", json=doc)
    assert resp.status_code == 200, resp.text
    body = resp.json()
    assert body["mask_dst_rle"] == body["mask_src_rle"]
    assert body["reachability"] == [True]
    assert body["wall_time_ms"] > 0


def test_edit_translation_fixture(client):
    sid = new_session(client)
    resp = client.post(f"/sessions/{sid}/edit", json=service_spec_doc())
    assert resp.status_code == 200
    body = resp.json()
    assert body["mask_dst_rle"]["runs"] == [[29, 3]]
    assert body["reachability"] == [True]
    assert set(body["artifacts"]) == {"preview", "overlay", "field", "corr"}
    corr = client.get(body["artifacts"]["corr"]).json()
    assert corr == EXPECTED_CORR


def test_edit_conflicting_sources_422(client):
    sid = new_session(client)
    doc = service_spec_doc(
        pairs=[
            {"source": [48, 32], "target": [96, 32]},
            {"source": [48, 32], "target": [48, 64]},
        ]
    )
    resp = client.post(f"/sessions/{sid}/edit", json=doc)
    assert resp.status_code == 422
    assert resp.json()["error"] == "ConflictingControlPoints"


def test_edit_path_mask_rejected(client):
    sid = new_session(client)
    resp = client.post(f"/sessions/{sid}/edit", json=fixture_spec_doc("mask.pgm"))
    assert resp.status_code == 422
    assert resp.json()["error"] == "MalformedSpec"


def test_artifacts_lifecycle(client):
    sid = new_session(client)
    assert client.get(f"/sessions/{sid}/artifacts/preview").status_code == 404
    client.post(f"/sessions/{sid}/edit", json=service_spec_doc())
    field = client.get(f"/sessions/{sid}/artifacts/field")
    assert field.status_code == 200
    assert field.content[:4] == b"DKF1"
    # stable bytes + ETag, conditional GET
    first = client.get(f"/sessions/{sid}/artifacts/overlay")
    second = client.get(f"/sessions/{sid}/artifacts/overlay")
    assert first.content == second.content
    assert first.headers["etag"] == second.headers["etag"]
    cached = client.get(
        f"/sessions/{sid}/artifacts/overlay", headers={"If-None-Match": first.headers["etag"]}
    )
    assert cached.status_code == 304
    assert client.get(f"/sessions/{sid}/artifacts/bogus").status_code == 404
    # no trace requested, so none is served
    assert client.get(f"/sessions/{sid}/artifacts/trace").status_code == 404


def test_edit_with_trace(client):
    sid = new_session(client)
    doc = service_spec_doc()
    doc["trace"] = {"seed": 3, "steps": 2, "blocks": 2}
    resp = client.post(f"/sessions/{sid}/edit", json=doc)
    assert resp.status_code == 200
    body = resp.json()
    assert "trace" in body["artifacts"]
    assert body["trace_summary"] == {
        "records": 4,
        "max_blend_delta_outside": 0.0,
        "max_masked_key_mass": 0.0,
    }
    trace = client.get(f"/sessions/{sid}/artifacts/trace").json()
    assert trace["config"]["seed"] == 3
    assert len(trace["records"]) == 4


def test_reposting_same_spec_is_idempotent(client):
    sid = new_session(client)
    doc = service_spec_doc()
    etags = []
    for _ in range(2):
        client.post(f"/sessions/{sid}/edit", json=doc)
        etags.append(
            {
                kind: client.get(f"/sessions/{sid}/artifacts/{kind}").headers["etag"]
                for kind in ("preview", "overlay", "field", "corr")
            }
        )
    assert etags[0] == etags[1]


def test_concurrent_sessions_stay_isolated(live_server):
    import httpx

    def worker(shift: int) -> tuple[str, list]:
        with httpx.Client(base_url=live_server, timeout=30) as c:
            sid = c.post("/sessions", content=write_pgm(fixture_image())).json()["id"]
            doc = service_spec_doc(
                pairs=[{"source": [48, 32], "target": [48 + 16 * shift, 32]}]
            )
            for _ in range(3):  # recompute the same session a few times
                body = c.post(f"/sessions/{sid}/edit", json=doc).json()
            corr = c.get(f"/sessions/{sid}/artifacts/corr").json()
            return sid, [e["dst"][0] - e["src"][0] for e in corr["entries"]]

    shifts = [1, 2, 3, 4] * 2
    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(worker, shifts))
    sids = [sid for sid, _ in results]
    assert len(set(sids)) == len(sids)
    for shift, (_, deltas) in zip(shifts, results):
        assert deltas and all(d == shift for d in deltas)


def test_publish_is_atomic_on_failure(tmp_path):
    store = SessionStore(tmp_path)
    sid = store.create(b"img", 1, 1)

    def good(d):
        (d / "summary.json").write_text("{}")

    store.publish_bundle(sid, good)
    first = store.current_bundle(sid)

    def bad(d):
        (d / "partial.bin").write_text("half")
        raise RuntimeError("simulated crash mid-write")

    with pytest.raises(RuntimeError):
        store.publish_bundle(sid, bad)
    assert store.current_bundle(sid) == first  # pointer never moved
    assert (first / "summary.json").is_file()
