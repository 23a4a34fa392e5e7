"""Command-line client for the poolplay service.

Without ``--server`` the service runs in-process; with it, requests go over HTTP
and paths are interpreted on the server's machine.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from typing import Optional, Sequence

import httpx

from .service.ops import BUILTIN_POLICIES

log = logging.getLogger("poolplay")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poolplay", description="League self-play training for grid football.")
    p.add_argument("--server", help="base URL of a running service, e.g. http://127.0.0.1:8000")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="start or resume a league run")
    t.add_argument("--config", help="TOML config file")
    t.add_argument("--resume", metavar="RUN", help="run directory to resume")
    t.add_argument("--run", help="run directory for a new run (default: runs/<config name>)")
    t.add_argument("--steps", type=int, help="scheduler steps to run")
    t.add_argument("--seconds", type=float, help="wall-clock budget")
    t.add_argument("--main-iterations", type=int, help="stop once the main agent reaches this iteration")

    e = sub.add_parser("eval", help="round robin among a pool's newest checkpoints")
    e.add_argument("--run", required=True)
    e.add_argument("--pool", required=True, help="OWNER/KIND (e.g. main/SHMP) or 'top'")
    e.add_argument("--games", type=int, default=6, help="games per pair")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--limit", type=int, default=10, help="newest N pool members (0: all)")
    e.add_argument("--no-scripted", action="store_true", help="leave the scripted baseline out")

    pl = sub.add_parser("play", help="one match between two checkpoints")
    pl.add_argument("--a", required=True, help=f"checkpoint file or one of {BUILTIN_POLICIES}")
    pl.add_argument("--b", required=True, help=f"checkpoint file or one of {BUILTIN_POLICIES}")
    pl.add_argument("--seed", type=int, required=True)
    pl.add_argument("--replay", help="write a line-delimited replay here")

    r = sub.add_parser("report", help="ranked report from a run's evaluation log")
    r.add_argument("--run", required=True)
    r.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("ablate", help="train ablation arms from a shared start and compare them")
    a.add_argument("--config", required=True)
    a.add_argument("--arms", required=True, help="comma-separated arm names")
    a.add_argument("--out", required=True, help="directory for the arms' runs")
    a.add_argument("--main-iterations", type=int, required=True)
    a.add_argument("--games-per-pair", type=int, default=6)
    a.add_argument("--repeats", type=int, default=1)
    a.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("gc", help="delete checkpoint payloads nothing references")
    g.add_argument("--run", required=True)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    return p


def _path(value: Optional[str], local: bool) -> Optional[str]:
    if value is None or not local or value in BUILTIN_POLICIES:
        return value
    return os.path.abspath(value)


def request_for(args: argparse.Namespace, local: bool) -> tuple[str, dict]:
    """Endpoint and JSON body for a parsed command."""
    P = lambda v: _path(v, local)  # noqa: E731
    if args.command == "train":
        if args.resume and args.config:
            raise ValueError("train: give either --config or --resume, not both")
        if not args.resume and not args.config:
            raise ValueError("train: --config is required unless --resume is given")
        run = args.resume or args.run or os.path.join("runs", os.path.splitext(os.path.basename(args.config))[0])
        return "/train", {"run_dir": P(run), "config": P(args.config), "resume": bool(args.resume),
                          "steps": args.steps, "seconds": args.seconds, "main_iterations": args.main_iterations}
    if args.command == "eval":
        return "/eval", {"run_dir": P(args.run), "pool": args.pool, "games": args.games, "seed": args.seed,
                         "limit": args.limit, "include_scripted": not args.no_scripted}
    if args.command == "play":
        return "/play", {"a": P(args.a), "b": P(args.b), "seed": args.seed, "replay": P(args.replay)}
    if args.command == "report":
        return "/report", {"run_dir": P(args.run), "seed": args.seed}
    if args.command == "ablate":
        arms = [x.strip() for x in args.arms.split(",") if x.strip()]
        return "/ablate", {"config": P(args.config), "arms": arms, "root": P(args.out),
                           "main_iterations": args.main_iterations, "games_per_pair": args.games_per_pair,
                           "repeats": args.repeats, "seed": args.seed}
    if args.command == "gc":
        return "/gc", {"run_dir": P(args.run)}
    raise ValueError(f"unknown command {args.command!r}")


def _detail(resp: httpx.Response) -> str:
    try:
        detail = resp.json().get("detail", resp.text)
    except ValueError:
        return resp.text
    if isinstance(detail, list):  # request validation errors
        return "; ".join(f"{'.'.join(str(x) for x in d.get('loc', [])[1:])}: {d.get('msg')}" for d in detail)
    return str(detail)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.command == "serve":
        import uvicorn

        uvicorn.run("poolplay.service.app:app", host=args.host, port=args.port)
        return 0
    local = args.server is None
    try:
        endpoint, body = request_for(args, local)
    except ValueError as e:
        parser.print_usage(sys.stderr)
        print(f"poolplay: error: {e}", file=sys.stderr)
        return 2
    try:
        if local:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app

            with TestClient(create_app(), raise_server_exceptions=False) as client:
                resp = client.post(endpoint, json=body)
        else:
            with httpx.Client(base_url=args.server, timeout=None) as client:
                resp = client.post(endpoint, json=body)
    except httpx.HTTPError as e:
        print(f"poolplay: error: cannot reach {args.server}: {e}", file=sys.stderr)
        return 1
    if resp.status_code != 200:
        print(f"poolplay: error: {_detail(resp)}", file=sys.stderr)
        return 1
    out = resp.json()
    if args.command == "report":
        sys.stdout.write(out["summary"])
    else:
        print(json.dumps(out, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
