"""Scenario files: a board layout, an adversary and a host script, run deterministically.

A scenario is a YAML document::

    seed: 7                      # required
    backend: transparent         # or curve
    n: 13                        # transparent group order
    quorums:
      - {id: q1, size: 3}        # or nodes: [1, 2, 3]; optional vendors: {1: acme}
    options: {seal_responses: true, share_proofs: false, phase_budget: 12}
    adversary:
      malicious: {2: craft}      # node id -> behaviour
      collusion: true
      rules:
        - {action: drop, src: 2, opcode: DEC_SHARE, response: true}
    script:
      - {op: keygen, quorum: q1, as: k1}
      - {op: decrypt, quorum: q1, key: k1, message: 4}
      - {op: sign, quorum: q1, key: k1, message: "hello", j: 3}
    costs: {DEC_SHARE: 119}      # optional, modeled latency in ms per node operation

Integer messages are encrypted as ``m * G``; strings are embedded into the group.
The outcome is ``success``, ``abort(<reason>)``, ``forgery-detected`` or
``secrecy-violated``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import jsonschema
import yaml

from .adversary import BEHAVIOURS, CraftingNode, bias_achieved, posterior
from .bench import LatencyModel
from .board import Board
from .elgamal import encode_message, encrypt
from .errors import (
    AccessDenied,
    CommitmentFailure,
    IncompleteQuorum,
    ProtocolError,
    QuorumError,
    QuorumTimeout,
    SetupError,
    ShareProofFailure,
    SigningFailed,
    UnknownKey,
)
from .fabric import AdversarySpec, Rule, Transcript
from .group import Backend, base_mul, params_from_config
from .host import QuorumConfig
from .wire import Op

_RULE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["action"],
    "properties": {
        "action": {"enum": ["drop", "modify", "duplicate", "delay", "inject"]},
        "src": {"type": "integer"},
        "dst": {"type": "integer"},
        "opcode": {"enum": [op.name for op in Op]},
        "response": {"type": "boolean"},
        "nth": {"type": "integer", "minimum": 1},
        "max_hits": {"type": "integer", "minimum": 0},
        "probability": {"type": "number", "minimum": 0, "maximum": 1},
        "offset": {"type": "integer", "minimum": 0},
        "xor": {"type": "integer", "minimum": 0, "maximum": 255},
        "replace": {"type": "string", "pattern": "^([0-9a-fA-F]{2})*$"},
        "resign": {"type": "boolean"},
        "slots": {"type": "integer", "minimum": 0},
        "envelope": {"type": "string", "pattern": "^([0-9a-fA-F]{2})*$"},
    },
}

_STEP = {
    "type": "object",
    "required": ["op"],
    "properties": {
        "op": {"enum": ["keygen", "decrypt", "sign", "cache", "rng", "propagate"]},
        "quorum": {"type": "string"},
        "key": {"type": "string"},
        "as": {"type": "string"},
        "message": {"type": ["integer", "string"]},
        "j": {"type": "integer", "minimum": 1},
        "count": {"type": "integer", "minimum": 1, "maximum": 1024},
        "j_start": {"type": "integer", "minimum": 1},
        "length": {"type": "integer", "minimum": 1},
        "from": {"type": "string"},
        "to": {"type": "string"},
        "proofs": {"type": "boolean"},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"op": {"const": "keygen"}}}, "then": {"required": ["quorum"]}},
        {"if": {"properties": {"op": {"enum": ["decrypt", "sign"]}}},
         "then": {"required": ["quorum", "key", "message"]}},
        {"if": {"properties": {"op": {"const": "cache"}}}, "then": {"required": ["quorum", "key"]}},
        {"if": {"properties": {"op": {"const": "rng"}}}, "then": {"required": ["quorum"]}},
        {"if": {"properties": {"op": {"const": "propagate"}}},
         "then": {"required": ["from", "to", "key"]}},
    ],
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed", "quorums", "script"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "seed": {"type": "integer"},
        "backend": {"enum": ["curve", "transparent"]},
        "n": {"type": "integer", "minimum": 2},
        "toy_hash": {"type": "boolean"},
        "quorums": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id"],
                "properties": {
                    "id": {"type": "string"},
                    "size": {"type": "integer", "minimum": 1, "maximum": 255},
                    "nodes": {"type": "array", "items": {"type": "integer", "minimum": 1},
                              "minItems": 1},
                    "vendors": {"type": "object", "additionalProperties": {"type": "string"}},
                },
                "oneOf": [{"required": ["size"]}, {"required": ["nodes"]}],
            },
        },
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seal_responses": {"type": "boolean"},
                "share_proofs": {"type": "boolean"},
                "phase_budget": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "adversary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "malicious": {"type": "object",
                              "additionalProperties": {"enum": sorted(BEHAVIOURS)}},
                "collusion": {"type": "boolean"},
                "seed": {"type": "integer"},
                "rules": {"type": "array", "items": _RULE},
            },
        },
        "script": {"type": "array", "items": _STEP},
        "costs": {"type": "object", "propertyNames": {"enum": [op.name for op in Op]},
                  "additionalProperties": {"type": "number", "minimum": 0}},
    },
}


class ScenarioError(SetupError):
    """Schema or consistency error in a scenario file, located by line and field."""

    def __init__(self, message: str, line: Optional[int] = None, field: str = ""):
        where = f"line {line}: " if line else ""
        at = f"{field}: " if field else ""
        super().__init__(f"{where}{at}{message}")
        self.line = line
        self.field = field


def _line_of(text: str, path) -> Optional[int]:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = node.start_mark.line + 1 if node is not None else None
    for part in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if str(k.value) == str(part):
                    nxt = v
                    line = k.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
        if node is None:
            break
    return line


def parse_scenario(text: str) -> dict:
    """Parse and validate scenario YAML; errors carry the offending line and field."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                            mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ScenarioError("a scenario must be a mapping", 1)
    # YAML integer keys (node ids) become strings for the schema
    adv = data.get("adversary")
    if isinstance(adv, dict) and isinstance(adv.get("malicious"), dict):
        adv["malicious"] = {str(k): v for k, v in adv["malicious"].items()}
    quorums = data.get("quorums")
    for q in quorums if isinstance(quorums, list) else []:
        if isinstance(q, dict) and isinstance(q.get("vendors"), dict):
            q["vendors"] = {str(k): v for k, v in q["vendors"].items()}
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = min(errors, key=lambda e: len(e.absolute_path))
        path = list(err.absolute_path)
        raise ScenarioError(err.message, _line_of(text, path), ".".join(str(p) for p in path) or "<root>")
    return data


def load_scenario(path: Union[str, Path]) -> dict:
    return parse_scenario(Path(path).read_text())


def bundled(name: str) -> dict:
    """One of the scenarios shipped with the package (``honest-decrypt``, ``rogue-key``, ...)."""
    ref = resources.files("quorumhsm") / "scenarios" / f"{name}.yaml"
    if not ref.is_file():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return parse_scenario(ref.read_text())


def bundled_names() -> List[str]:
    folder = resources.files("quorumhsm") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


@dataclass
class ScenarioResult:
    outcome: str
    reason: str
    transcript: Transcript
    summary: dict
    board: Board = field(repr=False)

    @property
    def label(self) -> str:
        return f"{self.outcome}({self.reason})" if self.reason else self.outcome

    def write(self, out_dir: Union[str, Path]) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"transcript": out / "transcript.bin", "log": out / "transcript.log",
                 "summary": out / "summary.json"}
        paths["transcript"].write_bytes(self.transcript.to_bytes())
        paths["log"].write_text("\n".join(self.transcript.lines()) + "\n")
        paths["summary"].write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return paths


def _rule(spec: dict) -> Rule:
    kw = dict(spec)
    for name in ("replace", "envelope"):
        if name in kw:
            kw[name] = bytes.fromhex(kw[name])
    return Rule(**kw)


def build_board(data: dict, seed: Optional[int] = None) -> Board:
    seed = data["seed"] if seed is None else seed
    params = params_from_config(data.get("backend", "transparent"), data.get("n", 13),
                                data.get("toy_hash", False))
    quorums, nxt = [], 1
    for q in data["quorums"]:
        if "nodes" in q:
            nodes = tuple(q["nodes"])
        else:
            nodes = tuple(range(nxt, nxt + q["size"]))
        nxt = max(nxt, max(nodes) + 1)
        vendors = {int(k): v for k, v in q.get("vendors", {}).items()}
        quorums.append(QuorumConfig(q["id"], nodes, vendors=vendors))
    adv = data.get("adversary", {})
    spec = AdversarySpec(
        malicious_nodes={int(k): v for k, v in adv.get("malicious", {}).items()},
        controller_actions=[_rule(r) for r in adv.get("rules", [])],
        collusion_channel=adv.get("collusion", False),
        seed=adv.get("seed", 0),
    )
    opts = data.get("options", {})
    return Board(params, quorums, seed=seed, adversary=spec,
                 seal_responses=opts.get("seal_responses", True),
                 share_proofs=opts.get("share_proofs", False),
                 phase_budget=opts.get("phase_budget"))


def _classify(exc: QuorumError) -> Tuple[str, str]:
    if isinstance(exc, SigningFailed):
        text = str(exc)
        if "verification-failed" in text:
            return "forgery-detected", ""
        if "replay-rejected" in text:
            return "abort", "replay-rejected"
        return "abort", "signing-failed"
    if isinstance(exc, CommitmentFailure):
        return "abort", "commitment-failure"
    if isinstance(exc, QuorumTimeout):
        return "abort", "timeout"
    if isinstance(exc, ShareProofFailure):
        return "abort", f"share-proof-failure:ic{exc.node_id}"
    if isinstance(exc, IncompleteQuorum):
        return "abort", "incomplete-quorum"
    if isinstance(exc, AccessDenied):
        return "abort", "access-denied"
    if isinstance(exc, UnknownKey):
        return "abort", "unknown-key"
    if isinstance(exc, ProtocolError):
        return "abort", "protocol-error"
    return "abort", type(exc).__name__


def _message_element(params, value):
    if isinstance(value, int):
        return base_mul(value, params)
    return encode_message(params, value.encode())


class _Runner:
    def __init__(self, data: dict, board: Board, seed: int):
        self.data = data
        self.board = board
        self.host = board.host
        self.params = board.params
        self.rng = random.Random(f"scenario/{seed}")
        self.keys: Dict[str, bytes] = {}
        self.holders: Dict[bytes, List[str]] = {}
        self.steps: List[dict] = []

    def key(self, name: str) -> bytes:
        try:
            return self.keys[name]
        except KeyError:
            raise ScenarioError(f"key {name!r} used before it was generated", field="script") from None

    def run_step(self, step: dict) -> dict:
        op = step["op"]
        board, host = self.board, self.host
        rec: Dict[str, Any] = {"op": op}
        if op == "keygen":
            q = board.quorum(step["quorum"])
            k = host.dkpg(q)
            name = step.get("as", f"k{len(self.keys) + 1}")
            self.keys[name] = k.key_id
            self.holders[k.key_id] = [q.quorum_id]
            rec.update(quorum=q.quorum_id, key=name, Y_agg=k.Y_agg.encode().hex())
        elif op == "decrypt":
            q = board.quorum(step["quorum"])
            kid = self.key(step["key"])
            m = _message_element(self.params, step["message"])
            ct = encrypt(self.params, m, host.keys[kid].Y_agg, self.rng)
            got = host.decrypt(q, kid, ct, step.get("proofs"))
            rec.update(quorum=q.quorum_id, key=step["key"], correct=got == m)
            if got != m:
                raise _WrongResult("wrong-plaintext")
        elif op == "sign":
            q = board.quorum(step["quorum"])
            kid = self.key(step["key"])
            sig = host.sign(q, kid, str(step["message"]).encode(), step.get("j"))
            rec.update(quorum=q.quorum_id, key=step["key"], j=sig.j, signature=sig.to_bytes().hex())
        elif op == "cache":
            q = board.quorum(step["quorum"])
            entries = host.cache(q, self.key(step["key"]), step.get("count", 8), step.get("j_start"))
            rec.update(quorum=q.quorum_id, key=step["key"], j=[e.j for e in entries])
        elif op == "rng":
            q = board.quorum(step["quorum"])
            rec.update(quorum=q.quorum_id, random=host.gen_random(q, step.get("length", 64)).hex())
        elif op == "propagate":
            src, dst = board.quorum(step["from"]), board.quorum(step["to"])
            kid = self.key(step["key"])
            host.propagate(src, dst, kid)
            self.holders[kid].append(dst.quorum_id)
            rec.update(**{"from": src.quorum_id, "to": dst.quorum_id, "key": step["key"]})
        rec["status"] = "ok"
        return rec

    def secrecy(self) -> Tuple[bool, dict]:
        board = self.board
        report, violated = {}, False
        names = {v: k for k, v in self.keys.items()}
        for kid, quorums in self.holders.items():
            for qid in quorums:
                know = board.knowledge(kid, board.quorum(qid))
                entry = {"quorum": qid, "known": sorted(know.known), "recovered": sorted(know.recovered),
                         "unknown": know.unknown, "violated": know.violated}
                if self.params.backend is Backend.TRANSPARENT and self.params.n <= 4096:
                    post = posterior(know)
                    entry["posterior_max"] = str(max(post))
                violated |= know.violated
                report[f"{names[kid]}@{qid}"] = entry
        for node in board.malicious.values():
            if isinstance(node, CraftingNode):
                for sid, _ in node.crafted.items():
                    target = node.target_key()
                    honest = [n for i, n in board.nodes.items() if i not in board.adversary.malicious]
                    if bias_achieved(honest, target, sid):
                        violated = True
                        report[f"bias@{sid.hex()[:8]}"] = {"violated": True}
        return violated, report


class _WrongResult(Exception):
    pass


def run_scenario(data: Union[dict, str, Path], seed: Optional[int] = None) -> ScenarioResult:
    """Run a scenario (parsed dict, YAML text or path) and classify its outcome."""
    if isinstance(data, Path) or (isinstance(data, str) and "\n" not in data and Path(data).exists()):
        data = load_scenario(data)
    elif isinstance(data, str):
        data = parse_scenario(data)
    seed = data["seed"] if seed is None else seed
    board = build_board(data, seed)
    runner = _Runner(data, board, seed)
    model = LatencyModel(board.fabric, data["costs"]) if "costs" in data else None
    outcome, reason, failed = "success", "", None
    for idx, step in enumerate(data["script"]):
        if model is not None:
            model.reset()
        try:
            rec = runner.run_step(step)
            if model is not None:
                rec["modeled_ms"] = model.makespan
            runner.steps.append(rec)
        except QuorumError as exc:
            if isinstance(exc, ScenarioError):
                raise
            outcome, reason = _classify(exc)
            failed = {"op": step["op"], "index": idx, "status": "failed",
                      "error": type(exc).__name__, "detail": str(exc)}
        except _WrongResult as exc:
            outcome, reason = "abort", str(exc)
            failed = {"op": step["op"], "index": idx, "status": "failed", "error": str(exc)}
        if failed:
            runner.steps.append(failed)
            break
    violated, secrecy = runner.secrecy()
    if violated:
        outcome, reason = "secrecy-violated", ""
    tr = board.transcript
    summary = {
        "name": data.get("name", ""),
        "seed": seed,
        "backend": board.params.backend.value,
        "outcome": outcome,
        "reason": reason,
        "label": f"{outcome}({reason})" if reason else outcome,
        "steps": runner.steps,
        "secrecy": secrecy,
        "slots": board.fabric.slot,
        "transcript": {"records": len(tr), "sha3_256": tr.digest()},
    }
    return ScenarioResult(outcome, reason, tr, summary, board)
