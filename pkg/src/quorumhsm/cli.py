"""Command-line front end.

State (provisioned nodes, host keys, counters) lives in ``<out>/state.json``,
so ``keygen`` followed by ``decrypt`` or ``sign`` works across invocations.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from .bench import run_bench
from .board import Board
from .elgamal import Ciphertext, decode_message, encode_message, encrypt
from .errors import QuorumError
from .group import base_mul, params_from_config
from .multisig import AggregateSignature, verify
from .reliability import k_tolerance, tolerance
from .scenario import ScenarioError, bundled, bundled_names, load_scenario, run_scenario

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
OUTCOME_EXIT = {"success": 0, "abort": 3, "forgery-detected": 4, "secrecy-violated": 5}


def _ints(text: str) -> List[int]:
    """``"1-4,7"`` -> ``[1, 2, 3, 4, 7]``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _state_path(args) -> Path:
    return Path(args.out) / "state.json"


def _load(args) -> Board:
    path = _state_path(args)
    if not path.exists():
        raise QuorumError(f"no state in {path}; run 'keygen' first")
    return Board.load(path)


def _key_id(board: Board, text: Optional[str]) -> bytes:
    keys = list(board.host.keys)
    if text is None:
        if not keys:
            raise QuorumError("no keys generated yet")
        return keys[-1]
    matches = [k for k in keys if k.hex().startswith(text.lower())]
    if len(matches) != 1:
        raise QuorumError(f"key {text!r} matches {len(matches)} keys")
    return matches[0]


def _message_element(params, args):
    if args.int is not None:
        return base_mul(args.int, params)
    return encode_message(params, args.message.encode())


def cmd_run(args) -> int:
    try:
        if Path(args.scenario).exists():
            data = load_scenario(args.scenario)
            name = Path(args.scenario).stem
        else:
            data = bundled(args.scenario)
            name = args.scenario
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = run_scenario(data, args.seed if args.seed_given else None)
    paths = result.write(Path(args.out) / name)
    print(f"{name}: {result.label}")
    print(f"transcript: {len(result.transcript)} records, sha3-256 {result.transcript.digest()}")
    for kind, p in paths.items():
        print(f"  {kind}: {p}")
    return OUTCOME_EXIT[result.outcome]


def cmd_bench(args) -> int:
    costs = None
    if args.costs:
        costs = yaml.safe_load(Path(args.costs).read_text())
    params = params_from_config(args.backend, args.n) if args.backend_given else None
    report = run_bench(_ints(args.sizes), _ints(args.counts), args.t, args.requests, args.op,
                       params, costs, args.seed)
    print(report.table())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out / "bench.txt").write_text(report.table() + "\n")
    return EXIT_OK if all(report.shape_checks().values()) else EXIT_FAILED


def cmd_keygen(args) -> int:
    path = _state_path(args)
    if path.exists() and not args.fresh:
        board = Board.load(path)
    else:
        params = params_from_config(args.backend, args.n)
        board = Board.build(params, _ints(args.quorums), seed=args.seed,
                           seal_responses=not args.no_seal, share_proofs=args.proofs)
    q = board.quorum(args.quorum)
    key = board.host.dkpg(q)
    board.save(path)
    print(f"key {key.key_id.hex()} on {q.quorum_id} {list(q.nodes)}")
    print(f"Y_agg {key.Y_agg.encode().hex()}")
    return EXIT_OK


def cmd_encrypt(args) -> int:
    board = _load(args)
    kid = _key_id(board, args.key)
    params = board.params
    m = _message_element(params, args)
    ct = encrypt(params, m, board.host.keys[kid].Y_agg, random.Random(f"cli/encrypt/{args.seed}"))
    print(ct.to_bytes().hex())
    return EXIT_OK


def cmd_decrypt(args) -> int:
    board = _load(args)
    kid = _key_id(board, args.key)
    q = board.quorum(args.quorum or board.host.keys[kid].quorum_id)
    ct = Ciphertext.from_bytes(board.params, bytes.fromhex(args.ciphertext))
    m = board.host.decrypt(q, kid, ct, True if args.proofs else None)
    board.save(_state_path(args))
    try:
        print(decode_message(m).decode())
    except (ValueError, UnicodeDecodeError, QuorumError):
        print(m.encode().hex())
    return EXIT_OK


def cmd_sign(args) -> int:
    board = _load(args)
    kid = _key_id(board, args.key)
    q = board.quorum(args.quorum or board.host.keys[kid].quorum_id)
    sig = board.host.sign(q, kid, args.message.encode(), args.j)
    board.save(_state_path(args))
    print(sig.to_bytes().hex())
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.public_key:
        params = params_from_config(args.backend, args.n)
        Y = params.decode_element(bytes.fromhex(args.public_key))
    else:
        board = _load(args)
        params = board.params
        Y = board.host.keys[_key_id(board, args.key)].Y_agg
    try:
        sig = AggregateSignature.from_bytes(params, bytes.fromhex(args.signature))
        ok = verify(Y, args.message.encode(), sig.j, sig)
    except (ValueError, QuorumError):
        ok = False
    print("valid" if ok else "invalid")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_rng(args) -> int:
    board = _load(args)
    out = board.host.gen_random(board.quorum(args.quorum), args.length)
    board.save(_state_path(args))
    print(out.hex())
    return EXIT_OK


def cmd_propagate(args) -> int:
    board = _load(args)
    kid = _key_id(board, args.key)
    board.host.propagate(board.quorum(getattr(args, "from")), board.quorum(args.to), kid)
    board.save(_state_path(args))
    print(f"key {kid.hex()} now also held by {args.to}")
    return EXIT_OK


def cmd_tolerance(args) -> int:
    if args.p is not None:
        for k in _ints(args.k):
            print(f"k={k}  1 - {args.p}^{k} = {k_tolerance(args.p, k)!r}")
    print(f"{'t':>3} {'k':>3} {'quorums':>7} {'leakage':>8} {'DoS':>4} {'IC failures':>12}")
    for t in _ints(args.t):
        tol = tolerance(t, t, args.quorums)
        print(f"{t:3d} {t:3d} {args.quorums:7d} {tol.leakage:8d} {tol.denial_of_service:4d}"
              f" {tol.ic_failures:12d}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quorumhsm", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    p.add_argument("--backend", choices=["curve", "transparent"], default=None,
                   help="group backend for new state (default curve)")
    p.add_argument("--n", type=int, default=13, help="transparent group order")
    p.add_argument("--out", default="quorumhsm-out", help="output and state directory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run a scenario file or bundled scenario")
    s.add_argument("scenario", help=f"path, or one of: {', '.join(bundled_names())}")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("bench", help="modeled latency and throughput sweeps")
    s.add_argument("--sizes", default="1-10", help="quorum sizes for the latency sweep")
    s.add_argument("--counts", default="1-8", help="quorum counts for the throughput sweep")
    s.add_argument("--t", type=int, default=3, help="quorum size for the throughput sweep")
    s.add_argument("--requests", type=int, default=840)
    s.add_argument("--op", choices=["decrypt", "sign"], default="decrypt")
    s.add_argument("--costs", help="YAML mapping of operation name to milliseconds")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("keygen", help="provision a board (if needed) and generate a key")
    s.add_argument("--quorums", default="3", help="quorum sizes, e.g. 3,2")
    s.add_argument("--quorum", help="quorum to generate on (default first)")
    s.add_argument("--fresh", action="store_true", help="discard existing state")
    s.add_argument("--proofs", action="store_true", help="require decryption share proofs")
    s.add_argument("--no-seal", action="store_true", help="do not encrypt responses to the host")
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("encrypt", help="encrypt under a generated key")
    s.add_argument("--key")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--message")
    g.add_argument("--int", type=int)
    s.set_defaults(func=cmd_encrypt)

    s = sub.add_parser("decrypt", help="distributed decryption")
    s.add_argument("ciphertext", help="hex ciphertext from 'encrypt'")
    s.add_argument("--key")
    s.add_argument("--quorum")
    s.add_argument("--proofs", action="store_true")
    s.set_defaults(func=cmd_decrypt)

    s = sub.add_parser("sign", help="distributed signature")
    s.add_argument("--message", required=True)
    s.add_argument("--key")
    s.add_argument("--quorum")
    s.add_argument("--j", type=int)
    s.set_defaults(func=cmd_sign)

    s = sub.add_parser("verify", help="verify a signature")
    s.add_argument("--message", required=True)
    s.add_argument("--signature", required=True)
    s.add_argument("--key")
    s.add_argument("--public-key", help="hex public key instead of a stored key")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("rng", help="distributed random bytes")
    s.add_argument("--quorum")
    s.add_argument("--length", type=int, default=64)
    s.set_defaults(func=cmd_rng)

    s = sub.add_parser("propagate", help="load a key onto a second quorum")
    s.add_argument("--key")
    s.add_argument("--from", required=True)
    s.add_argument("--to", required=True)
    s.set_defaults(func=cmd_propagate)

    s = sub.add_parser("tolerance", help="reliability estimate and tolerance matrix")
    s.add_argument("--p", type=float, help="per-foundry error probability")
    s.add_argument("--k", default="1-5", help="numbers of independent sources")
    s.add_argument("--t", default="1-5", help="quorum sizes for the matrix")
    s.add_argument("--quorums", type=int, default=1)
    s.set_defaults(func=cmd_tolerance)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    args.backend_given = args.backend is not None
    args.seed = args.seed if args.seed is not None else 0
    args.backend = args.backend or "curve"
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except QuorumError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
