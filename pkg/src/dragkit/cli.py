"""Command-line interface: compute bundles, trace the mechanism, serve, verify.

Exit codes: 0 ok, 2 user error, 3 internal error. User-facing failures print
one JSON object to stderr: {"error": <code>, "message": <detail>}.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import DragkitError, MalformedSpec
from .formats import (
    compute_bundle,
    decode_image,
    parse_drag_spec,
    pixels_to_tokens,
    trace_json_bytes,
    write_bundle,
)
from .harness import DragOutputs, HarnessConfig, run_mechanism
from .injection import InjectionConfig, LambdaSchedule
from .lrm import (
    BinaryMask,
    DragPair,
    LrmConfig,
    Point2,
    build_coarse_target,
    forward_displacement,
    reverse_displacement,
    reverse_map,
)

EXIT_OK = 0
EXIT_USER = 2
EXIT_INTERNAL = 3

TRACE_CELL_LIMIT = 1024  # joint attention is quadratic; keep traces desk-sized


def _build_parser() -> argparse.ArgumentParser:
    # the global flags live on a parent parser twice so they are accepted both
    # before and after the subcommand; SUPPRESS keeps the subcommand copy from
    # clobbering values given up front
    def common(suppress: bool):
        p = argparse.ArgumentParser(add_help=False)
        kw = {"default": argparse.SUPPRESS} if suppress else {}
        p.add_argument("--config", type=Path, help="JSON file with lrm/injection defaults",
                       **(kw if suppress else {"default": None}))
        p.add_argument("--seed", type=int, help="harness seed (trace)",
                       **(kw if suppress else {"default": 0}))
        p.add_argument("--quiet", action="store_true", help="suppress progress output", **kw)
        return p

    parser = argparse.ArgumentParser(
        prog="dragkit", description=__doc__.split("\n")[0], parents=[common(False)]
    )
    sub = parser.add_subparsers(dest="command", required=True)
    tail = [common(True)]

    p = sub.add_parser(
        "compute", help="compute an edit bundle from a spec and image", parents=tail
    )
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="bundle output directory")

    p = sub.add_parser("trace", help="run the toy transformer and emit a trace JSON", parents=tail)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--spec", type=Path, help="derive the drag from a spec (needs --image)")
    p.add_argument("--image", type=Path)
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--blocks", type=int, default=4)

    p = sub.add_parser("serve", help="start the HTTP edit service", parents=tail)
    p.add_argument("--port", type=int, default=int(os.environ.get("DK_PORT", "8787")))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument(
        "--data-dir", type=Path, default=Path(os.environ.get("DK_DATA_DIR", "dragkit-data"))
    )
    p.add_argument("--ui-dir", type=Path, help="static UI bundle to serve at /")

    p = sub.add_parser("verify", help="run the brute-force oracle checks on a spec", parents=tail)
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--samples", type=int, default=64)
    return parser


def _load_spec(path: Path, config: dict):
    try:
        doc = json.loads(path.read_text())
    except OSError:
        raise MalformedSpec(f"spec file not readable: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedSpec(f"spec is not valid JSON: {exc}") from None
    if config:
        for key in ("lrm", "injection"):
            merged = dict(config.get(key, {}))
            merged.update(doc.get(key, {}))
            if merged:
                doc[key] = merged
        for key in ("mask_policy", "downscale_factor"):
            if key in config:
                doc.setdefault(key, config[key])
    return parse_drag_spec(doc, base_dir=path.parent)


def _cmd_compute(args, config: dict) -> int:
    spec = _load_spec(args.spec, config)
    image = decode_image(args.image.read_bytes())
    bundle = compute_bundle(spec, image)
    write_bundle(args.out, bundle)
    if not args.quiet:
        print(f"bundle written to {args.out}")
    return EXIT_OK


def _default_trace_drag() -> tuple[tuple[int, int], DragOutputs]:
    # built-in scenario: 3-cell row dragged 3 cells to the right on a 12x6 grid
    mask = BinaryMask.from_cells(12, 6, [(2, 2), (3, 2), (4, 2)])
    pairs = [DragPair(Point2(3, 2), Point2(6, 2))]
    return (6, 12), DragOutputs.compute(mask, pairs)


def _cmd_trace(args, config: dict) -> int:
    if args.spec is not None:
        if args.image is None:
            raise MalformedSpec("trace with --spec also needs --image")
        spec = _load_spec(args.spec, config)
        grid, pairs, mask_src = pixels_to_tokens(spec)
        if grid[0] * grid[1] > TRACE_CELL_LIMIT:
            raise MalformedSpec(
                f"trace grid {grid[1]}x{grid[0]} exceeds {TRACE_CELL_LIMIT} cells"
            )
        drag = DragOutputs(mask_src, *reverse_map(mask_src, pairs, spec.lrm))
        mask_policy = spec.mask_policy
    else:
        grid, drag = _default_trace_drag()
        mask_policy = None

    steps = args.steps
    schedule = LambdaSchedule(
        total_steps=steps, hold_until=steps // 3, zero_from=max(steps // 3, 2 * steps // 3)
    )
    cfg = HarnessConfig(
        grid=grid,
        num_blocks=args.blocks,
        seed=args.seed,
        injection=InjectionConfig(
            schedule=schedule,
            block_subset=frozenset(range(args.blocks // 2, args.blocks)),
        ),
        **({"mask_policy": mask_policy} if mask_policy is not None else {}),
    )
    trace = run_mechanism(cfg, drag)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_bytes(trace_json_bytes(trace))
    if not args.quiet:
        print(f"trace written to {args.out}")
    return EXIT_OK


def _cmd_serve(args, config: dict) -> int:
    import uvicorn

    from .service import create_app

    origins = tuple(os.environ.get("DK_CORS_ORIGIN", "*").split(","))
    app = create_app(args.data_dir, cors_origins=origins, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning" if args.quiet else "info")
    return EXIT_OK


def _naive_forward(p, pairs, cfg: LrmConfig):
    for pr in pairs:
        if ((p[0] - pr.source.x) ** 2 + (p[1] - pr.source.y) ** 2) ** 0.5 <= cfg.exact_hit_tolerance:
            return np.array(pr.vector, dtype=float)
    num, den = np.zeros(2), cfg.epsilon
    for pr in pairs:
        w = 1.0 / ((p[0] - pr.source.x) ** 2 + (p[1] - pr.source.y) ** 2)
        num, den = num + w * pr.vector, den + w
    return num / den


def _naive_reverse(q, pairs, cfg: LrmConfig):
    for pr in pairs:
        if ((q[0] - pr.target.x) ** 2 + (q[1] - pr.target.y) ** 2) ** 0.5 <= cfg.exact_hit_tolerance:
            return -np.array(pr.vector, dtype=float)
    num, den = np.zeros(2), cfg.epsilon
    for pr in pairs:
        w = 1.0 / ((q[0] - pr.target.x) ** 2 + (q[1] - pr.target.y) ** 2)
        num, den = num - w * pr.vector, den + w
    return num / den


def _cmd_verify(args, config: dict) -> int:
    spec = _load_spec(args.spec, config)
    grid, pairs, mask_src = pixels_to_tokens(spec)
    cfg = spec.lrm
    rng = np.random.default_rng(args.seed)
    checks: list[tuple[str, bool]] = []

    worst = 0.0
    for _ in range(args.samples):
        p = rng.uniform(0, (grid[1], grid[0]))
        got = forward_displacement(p, pairs, cfg)
        want = _naive_forward(p, pairs, cfg)
        worst = max(worst, np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-12))
        got = reverse_displacement(p, pairs, cfg)
        want = _naive_reverse(p, pairs, cfg)
        worst = max(worst, np.linalg.norm(got - want) / max(np.linalg.norm(want), 1e-12))
    checks.append(("idw-oracle", worst < 1e-6))

    exact = all(
        np.array_equal(forward_displacement(pr.source, pairs, cfg), pr.vector)
        and np.array_equal(reverse_displacement(pr.target, pairs, cfg), -pr.vector)
        for pr in pairs
    )
    checks.append(("control-point-exactness", exact))

    mask_dst, field, corr = reverse_map(mask_src, pairs, cfg)
    coarse = build_coarse_target(mask_src, pairs, cfg)
    ok = all(mask_src.cells[py, px] == 1 for _, (px, py) in corr.entries())
    checks.append(("corr-inside-source", ok))
    checks.append(("dst-inside-coarse", not (mask_dst.cells & ~coarse.cells).any()))
    off = ~mask_dst.cells.astype(bool)
    checks.append(("field-zero-outside", not field.vectors[off].any()))
    checks.append(
        ("corr-presence-matches-dst", bool(np.array_equal(corr.present, mask_dst.cells.astype(bool))))
    )

    failed = False
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}")
        failed |= not passed
    return EXIT_INTERNAL if failed else EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    config = {}
    try:
        if args.config is not None:
            try:
                config = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise MalformedSpec(f"config file unusable: {exc}") from None
        handler = {
            "compute": _cmd_compute,
            "trace": _cmd_trace,
            "serve": _cmd_serve,
            "verify": _cmd_verify,
        }[args.command]
        return handler(args, config)
    except DragkitError as exc:
        json.dump({"error": exc.code, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_USER
    except Exception as exc:  # pragma: no cover - defensive
        json.dump({"error": "InternalError", "message": f"{type(exc).__name__}: {exc}"}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
