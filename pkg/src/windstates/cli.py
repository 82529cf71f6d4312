"""Command-line client for the pipeline service.

By default every command talks to an in-process instance of the HTTP
service, so batch use needs no running server; ``--server`` points the same
commands at a remote instance instead. Exit codes: 0 success, 1 usage
error, 2 data error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import re
import sys

import httpx

from .errors import UsageError
from .service.app import create_app
from .version import __version__

COMMANDS = {
    "synth": "generate labelled synthetic turbine data",
    "ingest": "resample turbine CSVs and write the epoch summary",
    "cluster": "cluster epoch correlation matrices per turbine",
    "boundaries": "fit wind-speed boundary models",
    "assign": "assign model states and report allocation changes",
    "report": "aggregate run artifacts into one report",
}

_OVERRIDE = re.compile(r"--([A-Za-z_][A-Za-z0-9_]*)=(.*)$", re.DOTALL)


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; we reserve 2 for data errors."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="windstates", description=__doc__)
    parser.add_argument("--version", action="version", version=f"windstates {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text, add_help=True)
        cmd.add_argument("--config", help="flat key=value config file")
        cmd.add_argument("--seed", type=int, help="override the run seed")
        cmd.add_argument("--out", help="run directory for data and artifacts")
        cmd.add_argument(
            "--server",
            help="base URL of a running service (default: in-process)",
        )
    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _parse_overrides(extra: list[str]) -> dict[str, str]:
    overrides: dict[str, str] = {}
    for item in extra:
        match = _OVERRIDE.fullmatch(item)
        if not match:
            raise UsageError(f"unrecognized argument {item!r}; expected --key=value")
        overrides[match.group(1)] = match.group(2)
    return overrides


async def _post(server: str | None, command: str, payload: dict) -> httpx.Response:
    if server:
        async with httpx.AsyncClient(base_url=server, timeout=600.0) as client:
            return await client.post(f"/{command}", json=payload)
    transport = httpx.ASGITransport(app=create_app())
    async with httpx.AsyncClient(
        transport=transport, base_url="http://windstates", timeout=600.0
    ) as client:
        return await client.post(f"/{command}", json=payload)


def _error_detail(response: httpx.Response) -> str:
    try:
        body = response.json()
    except ValueError:
        return response.text
    if isinstance(body, dict):
        return str(body.get("error") or body.get("detail") or body)
    return str(body)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if args.command == "serve":
            if extra:
                raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
            import uvicorn

            uvicorn.run(create_app(), host=args.host, port=args.port)
            return 0
        overrides = _parse_overrides(extra)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1

    payload = {
        "config": args.config,
        "seed": args.seed,
        "out": args.out,
        "overrides": overrides,
    }
    try:
        response = asyncio.run(_post(args.server, args.command, payload))
    except httpx.HTTPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if response.status_code == 200:
        print(json.dumps(response.json()["summary"], indent=2, sort_keys=True))
        return 0
    print(f"error: {_error_detail(response)}", file=sys.stderr)
    if response.status_code in (400, 422):
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
