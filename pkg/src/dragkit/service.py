"""HTTP edit service: sessions, edit computation, artifact retrieval.

Persistence is plain files under the data directory:

    sessions/<id>/image.bin          uploaded bytes, as received
    sessions/<id>/meta.json          decoded dimensions + timestamps
    sessions/<id>/spec.json          last accepted spec (canonical JSON)
    sessions/<id>/bundles/<nonce>/   one complete artifact set
    sessions/<id>/current.txt        nonce of the published bundle

A bundle becomes visible only when current.txt is atomically replaced, so a
killed computation can never expose partial artifacts. Per-session writes are
serialized with an in-process lock; reads touch only published bundles.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import threading
import time
import uuid
from pathlib import Path

from fastapi import Body, FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response

from .errors import DragkitError, MalformedSpec
from .formats import (
    MEDIA_TYPES,
    canonical_json_bytes,
    compute_bundle,
    decode_image,
    parse_drag_spec,
    spec_to_dict,
    write_bundle,
)
from .harness import DragOutputs, HarnessConfig, run_mechanism
from .injection import InjectionConfig, LambdaSchedule

MAX_IMAGE_AREA = 4096 * 4096
TRACE_CELL_LIMIT = 1024
ARTIFACT_KINDS = ("preview", "overlay", "field", "corr", "trace")


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": code, "message": message}, status_code=status)


class SessionStore:
    def __init__(self, root: Path):
        self.root = Path(root)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def path(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def exists(self, session_id: str) -> bool:
        return (self.path(session_id) / "meta.json").is_file()

    def create(self, image_bytes: bytes, width: int, height: int) -> str:
        session_id = uuid.uuid4().hex
        base = self.path(session_id)
        base.mkdir(parents=True)
        (base / "image.bin").write_bytes(image_bytes)
        now = time.time()
        (base / "meta.json").write_bytes(
            canonical_json_bytes(
                {"width_px": width, "height_px": height, "created": now, "updated": now}
            )
        )
        return session_id

    def touch(self, session_id: str) -> None:
        meta_path = self.path(session_id) / "meta.json"
        meta = json.loads(meta_path.read_text())
        meta["updated"] = time.time()
        meta_path.write_bytes(canonical_json_bytes(meta))

    def publish_bundle(self, session_id: str, write) -> None:
        """Write a bundle via `write(dir)` and flip the published pointer."""
        base = self.path(session_id)
        nonce = uuid.uuid4().hex
        bundle_dir = base / "bundles" / nonce
        bundle_dir.mkdir(parents=True)
        write(bundle_dir)
        pointer = base / "current.txt"
        tmp = base / f".current.{nonce}.tmp"
        tmp.write_text(nonce)
        old = pointer.read_text().strip() if pointer.exists() else None
        tmp.replace(pointer)
        if old and old != nonce:
            shutil.rmtree(base / "bundles" / old, ignore_errors=True)

    def current_bundle(self, session_id: str) -> Path | None:
        pointer = self.path(session_id) / "current.txt"
        if not pointer.is_file():
            return None
        return self.path(session_id) / "bundles" / pointer.read_text().strip()


def _maybe_trace(trace_req, drag: DragOutputs, grid: tuple[int, int], policy):
    if trace_req is None:
        return None
    if not isinstance(trace_req, dict):
        raise MalformedSpec("'trace' must be an object")
    seed = trace_req.get("seed", 0)
    steps = trace_req.get("steps", 6)
    blocks = trace_req.get("blocks", 4)
    for name, value in (("seed", seed), ("steps", steps), ("blocks", blocks)):
        if not isinstance(value, int) or isinstance(value, bool):
            raise MalformedSpec(f"trace.{name} must be an integer")
    if grid[0] * grid[1] > TRACE_CELL_LIMIT:
        raise MalformedSpec(
            f"trace grid {grid[1]}x{grid[0]} exceeds {TRACE_CELL_LIMIT} cells"
        )
    schedule = LambdaSchedule(
        total_steps=steps, hold_until=steps // 3, zero_from=max(steps // 3, 2 * steps // 3)
    )
    cfg = HarnessConfig(
        grid=grid,
        num_blocks=blocks,
        seed=seed,
        injection=InjectionConfig(
            schedule=schedule, block_subset=frozenset(range(blocks // 2, blocks))
        ),
        mask_policy=policy,
    )
    return run_mechanism(cfg, drag)


def create_app(
    data_dir: Path | str, cors_origins: tuple[str, ...] = ("*",), ui_dir: Path | None = None
) -> FastAPI:
    store = SessionStore(Path(data_dir))
    app = FastAPI(title="dragkit edit service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.body()
        if not body:
            return _error_response(415, "UndecodableImage", "empty upload")
        try:
            image = decode_image(body)
        except Exception as exc:  # Pillow bomb guard included
            return _error_response(415, "UndecodableImage", str(exc))
        h, w = image.shape[:2]
        if h * w > MAX_IMAGE_AREA:
            return _error_response(413, "ImageTooLarge", f"{w}x{h} exceeds area limit")
        session_id = store.create(body, w, h)
        return JSONResponse({"id": session_id}, status_code=201)

    @app.post("/sessions/{session_id}/edit")
    def compute_edit(session_id: str, payload: dict = Body(...)):
        if not store.exists(session_id):
            return _error_response(404, "UnknownSession", session_id)
        with store.lock(session_id):
            started = time.perf_counter()
            try:
                trace_req = payload.pop("trace", None)
                spec = parse_drag_spec(payload)
                image = decode_image((store.path(session_id) / "image.bin").read_bytes())
                # masks must be inline data URLs server-side; allow_paths=False enforces it
                bundle = compute_bundle(spec, image, allow_paths=False)
                drag = None
                if trace_req is not None:
                    drag = DragOutputs(
                        bundle.mask_src, bundle.mask_dst, bundle.field, bundle.corr
                    )
                trace = _maybe_trace(trace_req, drag, bundle.grid, spec.mask_policy)
            except DragkitError as exc:
                return _error_response(422, exc.code, str(exc))
            (store.path(session_id) / "spec.json").write_bytes(
                canonical_json_bytes(spec_to_dict(spec))
            )
            store.publish_bundle(session_id, lambda d: write_bundle(d, bundle, trace))
            store.touch(session_id)
            wall_ms = (time.perf_counter() - started) * 1000.0
        kinds = ["preview", "overlay", "field", "corr"] + (
            ["trace"] if trace is not None else []
        )
        response = dict(bundle.summary)
        response["session"] = session_id
        response["wall_time_ms"] = wall_ms
        if trace is not None:
            response["trace_summary"] = {
                "records": len(trace.records),
                "max_blend_delta_outside": max(r.blend_delta_outside for r in trace.records),
                "max_masked_key_mass": max(r.masked_key_mass for r in trace.records),
            }
        response["artifacts"] = {
            kind: f"/sessions/{session_id}/artifacts/{kind}" for kind in kinds
        }
        return response

    @app.get("/sessions/{session_id}/artifacts/{kind}")
    def get_artifact(session_id: str, kind: str, request: Request):
        if kind not in ARTIFACT_KINDS or not store.exists(session_id):
            return _error_response(404, "NotFound", f"{session_id}/{kind}")
        bundle_dir = store.current_bundle(session_id)
        if bundle_dir is None:
            return _error_response(404, "NotFound", "no bundle computed yet")
        names = json.loads((bundle_dir / "summary.json").read_text())["artifacts"]
        if kind not in names:
            return _error_response(404, "NotFound", f"bundle has no {kind}")
        path = bundle_dir / names[kind]
        data = path.read_bytes()
        etag = '"' + hashlib.sha256(data).hexdigest() + '"'
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304, headers={"ETag": etag})
        media = MEDIA_TYPES.get(path.suffix, "application/octet-stream")
        return Response(content=data, media_type=media, headers={"ETag": etag})

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
