"""Command line client.

Node commands talk to the HTTP API: in-process against ``--home`` by default,
or to a running ``filedes serve`` with ``--server URL``. ``keygen`` and the
``sim`` commands run locally.

Results go to stdout as JSON. Failures print one JSON line
``{"error": <name>, "detail": ...}`` to stderr; usage errors exit 2, protocol
failures exit 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path
from typing import List, Optional

from .errors import FileDESError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CliError(Exception):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(detail)
        self.code = code
        self.detail = detail


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("UsageError", message)
        sys.exit(EXIT_USAGE)


def _emit_error(code: str, detail: str) -> None:
    print(json.dumps({"error": code, "detail": detail}), file=sys.stderr)


def _out(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


class Api:
    """Thin JSON client; raises :class:`CliError` on any non-2xx reply."""

    def __init__(self, home: str, server: Optional[str] = None, rsa_bits: int = 2048):
        if server:
            import httpx
            self._http = httpx.Client(base_url=server, timeout=120.0)
        else:
            with warnings.catch_warnings():
                # starlette nags about its httpx backend; irrelevant in-process
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import create_app
            self._http = TestClient(create_app(home, rsa_bits=rsa_bits))

    def call(self, method: str, path: str, body: Optional[dict] = None, params: Optional[dict] = None) -> dict:
        resp = self._http.request(method, path, json=body, params=params)
        try:
            payload = resp.json()
        except ValueError:
            payload = {"error": "ServerError", "detail": resp.text[:200]}
        if resp.status_code >= 400:
            raise CliError(payload.get("error", "ServerError"), str(payload.get("detail", "")))
        return payload


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError("FileNotReadable", f"{path}: {exc.strerror}") from None


def _write(path: str, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError("FileNotWritable", f"{path}: {exc.strerror}") from None


# -- command handlers -------------------------------------------------------

def cmd_keygen(args, api_factory) -> None:
    from .node import generate_key
    key = generate_key(args.plan, args.rsa_bits)
    _write(args.out, key.to_bytes())
    _out({"plan": args.plan, "out": args.out})


def cmd_put(args, api_factory) -> None:
    data = _read(args.file)
    body = {"file_id": args.file_id or Path(args.file).name, "data": data.hex(), "ctr": args.ctr,
            "plan": args.plan}
    if args.key:
        body["keys"] = [_read(k).hex() for k in args.key]
    _out(api_factory().call("POST", "/files", body))


def cmd_challenge(args, api_factory) -> None:
    _out(api_factory().call("POST", "/challenges", {"cid": args.cid}))


def cmd_prove(args, api_factory) -> None:
    res = api_factory().call("POST", "/proofs", {"cid": args.cid, "challenge": args.challenge, "rounds": args.rounds})
    if args.out:
        _write(args.out, bytes.fromhex(res["proof"]))
        res = {"cid": res["cid"], "out": args.out, "size": len(res["proof"]) // 2}
    _out(res)


def cmd_verify(args, api_factory) -> None:
    proof = _read(args.proof)
    _out(api_factory().call("POST", "/verify", {"proof": proof.hex(), "root": args.root, "challenge": args.challenge}))


def cmd_rollup(args, api_factory) -> None:
    _out(api_factory().call("POST", "/rollups", {"epoch": args.epoch}))


def cmd_retrieve(args, api_factory) -> None:
    params = {"version": args.version} if args.version is not None else None
    res = api_factory().call("GET", f"/files/{args.file_id}", params=params)
    data = bytes.fromhex(res["data"])
    _write(args.out, data)
    _out({"file_id": args.file_id, "version": args.version, "out": args.out, "size": len(data)})


def cmd_status(args, api_factory) -> None:
    _out(api_factory().call("GET", "/status"))


def cmd_serve(args, api_factory) -> None:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(args.home, rsa_bits=args.rsa_bits), host=args.host, port=args.port)


def cmd_sim_run(args, api_factory) -> None:
    from .sim import ScenarioConfig, run_scenario
    try:
        cfg = ScenarioConfig.load(args.config, seed=args.seed)
    except OSError as exc:
        raise CliError("FileNotReadable", f"{args.config}: {exc.strerror}") from None
    result = run_scenario(cfg)
    report = result.report
    if args.metrics:
        _write(args.metrics, report.to_csv().encode())
    if args.summary:
        _write(args.summary, (report.summary_json() + "\n").encode())
    if args.events:
        _write(args.events, result.ledger.dump_events().encode())
    if not (args.metrics or args.summary):
        print(report.to_csv(), end="")
    else:
        _out(report.summary["final"])


def cmd_sim_attack(args, api_factory) -> None:
    from .sim.attacks import run_attack_experiment
    if args.kind == "generation":
        params = {"leaf_count": args.leaf_count, "cached_paths": args.cached_paths, "rounds": args.rounds}
    else:
        params = {"ctr": args.ctr, "keep": args.keep, "rounds": args.rounds}
    try:
        stats = run_attack_experiment(args.kind, params, args.trials, args.seed)
    except ValueError as exc:
        raise CliError("ConfigInvalid", str(exc)) from None
    _out(stats.to_json())


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="filedes", description="Encrypted, versioned decentralized storage node and simulator.")
    p.add_argument("--home", default=os.environ.get("FILEDES_HOME", ".filedes"), help="node state directory")
    p.add_argument("--server", default=os.environ.get("FILEDES_SERVER"), help="URL of a running node API")
    p.add_argument("--rsa-bits", type=int, default=2048, choices=(1024, 2048, 3072))
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("keygen", help="generate a replica key")
    s.add_argument("--plan", choices=("a", "b"), required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("put", help="store a new version of a file")
    s.add_argument("file")
    s.add_argument("--ctr", type=int, default=3)
    s.add_argument("--plan", choices=("a", "b"), default="a")
    s.add_argument("--file-id", help="defaults to the file's base name")
    s.add_argument("--key", action="append", help="key file from keygen; repeat once per replica")
    s.set_defaults(func=cmd_put)

    s = sub.add_parser("challenge", help="issue a challenge for a stored replica")
    s.add_argument("cid")
    s.set_defaults(func=cmd_challenge)

    s = sub.add_parser("prove", help="answer a challenge (PoS, or PoSt with --rounds)")
    s.add_argument("cid")
    s.add_argument("--challenge", required=True)
    s.add_argument("--rounds", type=int)
    s.add_argument("--out", help="write the binary proof here")
    s.set_defaults(func=cmd_prove)

    s = sub.add_parser("verify", help="check a proof file")
    s.add_argument("proof")
    s.add_argument("--root", required=True)
    s.add_argument("--challenge", required=True)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("rollup", help="challenge all live deals and aggregate under an epoch")
    s.add_argument("--epoch", type=int, required=True)
    s.set_defaults(func=cmd_rollup)

    s = sub.add_parser("retrieve", help="rebuild a file from verified replicas")
    s.add_argument("file_id")
    s.add_argument("--out", required=True)
    s.add_argument("--version", type=int)
    s.set_defaults(func=cmd_retrieve)

    s = sub.add_parser("status", help="ledger summary")
    s.set_defaults(func=cmd_status)

    s = sub.add_parser("serve", help="run the node API over HTTP")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.set_defaults(func=cmd_serve)

    sim = sub.add_parser("sim", help="simulator").add_subparsers(dest="sim_command", required=True,
                                                                 parser_class=_Parser)
    s = sim.add_parser("run", help="run a scenario")
    s.add_argument("config")
    s.add_argument("--metrics", help="per-epoch CSV output")
    s.add_argument("--summary", help="summary JSON output")
    s.add_argument("--events", help="ledger event log output (JSONL)")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.set_defaults(func=cmd_sim_run)

    s = sim.add_parser("attack", help="repeat an attack experiment")
    s.add_argument("--kind", choices=("sybil", "generation"), required=True)
    s.add_argument("--trials", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rounds", type=int, default=1, help="PoSt rounds per challenge")
    s.add_argument("--leaf-count", type=int, default=16, help="generation: leaves N")
    s.add_argument("--cached-paths", type=int, default=4, help="generation: cached paths k")
    s.add_argument("--ctr", type=int, default=3, help="sybil: replicas m")
    s.add_argument("--keep", type=int, default=1, help="sybil: replicas kept m'")
    s.set_defaults(func=cmd_sim_attack)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    def api_factory() -> Api:
        return Api(args.home, args.server, args.rsa_bits)

    try:
        args.func(args, api_factory)
    except CliError as exc:
        _emit_error(exc.code, exc.detail)
        return EXIT_FAIL
    except FileDESError as exc:
        _emit_error(exc.code, str(exc.args[0]) if exc.args else "")
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
