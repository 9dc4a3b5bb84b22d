"""Thin command-line client for the experiment service.

Subcommands map one-to-one onto service endpoints.  By default requests run
against an in-process instance of the service (no server needed); pass
``--server URL`` to talk to a remote instance instead.  Artifacts returned by
the service are written to ``--out`` unchanged, so local and remote runs
produce byte-identical files.

Exit codes: 0 success, 1 assertion/validation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfedit",
                                     description="few-step flow inversion/editing experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override (u64)")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both",
                       help="tabular artifact(s) to write")
        p.add_argument("--svg", action="store_true", help="also emit trajectory SVGs")
        p.add_argument("--server", default=None, help="remote service URL (default: in-process)")
        return p

    add_run_command("reconstruct", "round-trip error per inversion method")
    add_run_command("edit", "run the configured edit over sampled sources")
    add_run_command("compare", "paired ablation matrix with directional assertions")
    p = add_run_command("sweep", "hyperparameter sweep with monotonicity assertions")
    p.add_argument("--param", required=True, choices=("w", "alpha", "hook_scale", "n_steps"))
    p.add_argument("--values", required=True,
                   help="comma-separated sweep values, e.g. 2.0,2.5,3.0")
    add_run_command("plot", "straight-vs-curved trajectory figure")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _post_inprocess(path: str, payload: dict) -> httpx.Response:
    from .service.app import create_app

    transport = httpx.ASGITransport(app=create_app())

    async def go():
        async with httpx.AsyncClient(transport=transport,
                                     base_url="http://rfedit.internal") as client:
            return await client.post(path, json=payload, timeout=None)

    return asyncio.run(go())


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server is None:
        return _post_inprocess(path, payload)
    with httpx.Client(base_url=server, timeout=None) as client:
        return client.post(path, json=payload)


def _write_artifacts(out_dir: str, artifacts: dict[str, str], fmt: str, svg: bool) -> list[str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, content in sorted(artifacts.items()):
        if name == "runs.csv" and fmt == "json":
            continue
        if name == "runs.json" and fmt == "csv":
            continue
        if name.endswith(".svg") and not svg:
            continue
        path = out / name
        path.write_text(content, encoding="utf-8")
        written.append(str(path))
    return written


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service.app import create_app
        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK

    try:
        config_text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    payload = {"config_text": config_text, "svg": bool(args.svg)}
    if args.seed is not None:
        payload["seed"] = args.seed
    if args.command == "sweep":
        try:
            payload["values"] = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            print(f"error: bad --values {args.values!r}", file=sys.stderr)
            return EXIT_CONFIG
        payload["param"] = args.param

    try:
        resp = _post(args.server, f"/run/{args.command}", payload)
    except httpx.HTTPError as exc:
        print(f"error: service request failed: {exc}", file=sys.stderr)
        return EXIT_ASSERTION

    if resp.status_code in (400, 422):
        try:
            detail = resp.json().get("detail")
        except json.JSONDecodeError:
            detail = resp.text
        print(f"configuration error: {detail}", file=sys.stderr)
        return EXIT_CONFIG
    if resp.status_code != 200:
        print(f"error: service returned {resp.status_code}: {resp.text}", file=sys.stderr)
        return EXIT_ASSERTION

    body = resp.json()
    written = _write_artifacts(args.out, body["artifacts"], args.format, args.svg)
    for a in body["assertions"]:
        tag = "PASS" if a["passed"] else "FAIL"
        print(f"[{tag}] {a['name']}: {a['detail']}")
    print(f"{body['experiment']}: {len(body['rows'])} rows; wrote "
          f"{', '.join(written) if written else 'no files'}")
    if not body["passed"]:
        return EXIT_ASSERTION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
