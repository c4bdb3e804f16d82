"""Desk-scale performance model.

Wall-clock numbers from real smartcards cannot be reproduced here, so latency
is modeled: the protocols run for real on the fabric, and an observer charges
each node delivery a fixed cost from a per-operation table.  A node works on
one message at a time; messages leave a node when its work finishes.  The
modeled latency of an operation is the time its last response reaches the
host.  Shapes (flat decryption latency, linear throughput, quadratic keygen
traffic) come out of the simulation, not out of the cost table.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

from .board import Board
from .elgamal import encrypt
from .fabric import Fabric
from .group import DomainParams, base_mul, transparent
from .wire import Op, is_host, peek_header

# Milliseconds per node operation.  DEC_SHARE, SIGN, CACHE_NONCE (per index)
# and KEYGEN_INIT are smartcard measurements used purely as model inputs; the
# remaining entries are assumptions of the same order as the cheap card ops.
DEFAULT_COSTS: Dict[str, float] = {
    "KEYGEN_INIT": 624.0,
    "KEYGEN_STORE_HASH": 40.0,
    "KEYGEN_STORE_PUBKEY": 50.0,
    "KEYGEN_GET_PUBKEY": 5.0,
    "KEYGEN_FINALIZE": 5.0,
    "DEC_SHARE": 119.0,
    "CACHE_NONCE": 169.0,
    "SIGN": 517.0,
    "RNG": 30.0,
    "KEYPROP_PREPARE": 5.0,
    "KEYPROP_SPLIT": 150.0,
    "KEYPROP_SHARE": 100.0,
    "KEYPROP_FINALIZE": 5.0,
}


class LatencyModel:
    """Fabric observer that assigns modeled times to every delivery.

    ``issue_at`` fixes the send time of host commands (used for throughput,
    where the host queues requests up front).  When it is ``None`` the host
    is sequential: a command leaves once everything before it has finished.
    """

    def __init__(self, fabric: Fabric, costs: Optional[Mapping[str, float]] = None,
                 link_ms: float = 0.0):
        self.costs = dict(DEFAULT_COSTS)
        self.costs.update(costs or {})
        self.link_ms = link_ms
        self.issue_at: Optional[float] = None
        self.reset()
        fabric.observers.append(self)

    def reset(self) -> None:
        self.ready: Dict[tuple, float] = {}
        self.busy: Dict[int, float] = {}
        self.arrivals: List[float] = []
        self.horizon = 0.0
        self._slot = -1
        self._slot_start = 0.0

    def cost(self, opcode: int, data: bytes) -> float:
        if opcode & 0x80:
            return 0.0
        op = Op(opcode)
        c = self.costs.get(op.name, 0.0)
        if op is Op.CACHE_NONCE:
            count = int.from_bytes(data[-66:-64], "big")
            c *= max(count, 1)
        return c

    def __call__(self, slot: int, target: int, data: bytes, outbound: List[bytes]) -> None:
        src, _, seq, opcode = peek_header(data)
        if slot != self._slot:
            # host commands were sent before this slot's deliveries began
            self._slot, self._slot_start = slot, self.horizon
        if is_host(src):
            sent = self.issue_at if self.issue_at is not None else self._slot_start
        else:
            sent = self.ready.get((src, seq), self.horizon)
        arrive = sent + self.link_ms
        if is_host(target):
            self.arrivals.append(arrive)
            self.horizon = max(self.horizon, arrive)
            return
        start = max(arrive, self.busy.get(target, 0.0))
        finish = start + self.cost(opcode, data)
        self.busy[target] = finish
        self.horizon = max(self.horizon, finish)
        for out in outbound:
            s, _, q, _ = peek_header(out)
            self.ready[(s, q)] = finish

    @property
    def makespan(self) -> float:
        return max(self.arrivals, default=0.0)


@dataclass
class LatencyRow:
    t: int
    keygen_ms: float
    decrypt_ms: float
    sign_ms: float
    store_hash_msgs: int
    store_pubkey_msgs: int
    decrypt_rounds: int


@dataclass
class ThroughputRow:
    quorums: int
    requests: int
    makespan_ms: float
    ops_per_s: float


@dataclass
class BenchReport:
    latency: List[LatencyRow] = field(default_factory=list)
    throughput: List[ThroughputRow] = field(default_factory=list)
    op: str = "decrypt"
    costs: Dict[str, float] = field(default_factory=dict)

    @property
    def decrypt_spread(self) -> float:
        vals = [r.decrypt_ms for r in self.latency]
        return (max(vals) - min(vals)) / min(vals) if vals else 0.0

    @property
    def sign_spread(self) -> float:
        vals = [r.sign_ms for r in self.latency]
        return (max(vals) - min(vals)) / min(vals) if vals else 0.0

    def throughput_fit(self):
        """Least-squares line through (quorums, ops/s) and its worst relative residual."""
        if len(self.throughput) < 2:
            return 0.0, 0.0, 0.0
        xs = [r.quorums for r in self.throughput]
        ys = [r.ops_per_s for r in self.throughput]
        slope, intercept = statistics.linear_regression(xs, ys)
        resid = max(abs(y - (slope * x + intercept)) / y for x, y in zip(xs, ys))
        return slope, intercept, resid

    def shape_checks(self) -> Dict[str, bool]:
        checks = {}
        if self.latency:
            checks["decrypt latency spread < 0.8%"] = self.decrypt_spread < 0.008
            checks["keygen exchanges = t(t-1) per round"] = all(
                r.store_hash_msgs == r.t * (r.t - 1) and r.store_pubkey_msgs == r.t * (r.t - 1)
                for r in self.latency)
            keygen = [r.keygen_ms for r in self.latency]
            checks["keygen latency increases with t"] = all(a < b for a, b in zip(keygen, keygen[1:]))
            checks["decryption is one round"] = all(r.decrypt_rounds == 1 for r in self.latency)
        if len(self.throughput) >= 2:
            checks["throughput linear in quorums (residual < 1%)"] = self.throughput_fit()[2] < 0.01
        return checks

    def to_dict(self) -> dict:
        slope, intercept, resid = self.throughput_fit()
        return {
            "costs_ms": self.costs,
            "latency": [r.__dict__ for r in self.latency],
            "decrypt_spread": self.decrypt_spread,
            "sign_spread": self.sign_spread,
            "throughput_op": self.op,
            "throughput": [r.__dict__ for r in self.throughput],
            "throughput_fit": {"slope": slope, "intercept": intercept, "max_rel_residual": resid},
            "checks": self.shape_checks(),
        }

    def table(self) -> str:
        lines = []
        if self.latency:
            lines.append(" t  keygen_ms  decrypt_ms  sign_ms  STORE_HASH  STORE_PUBKEY")
            for r in self.latency:
                lines.append(f"{r.t:2d} {r.keygen_ms:10.1f} {r.decrypt_ms:11.1f} {r.sign_ms:8.1f}"
                             f" {r.store_hash_msgs:11d} {r.store_pubkey_msgs:13d}")
            lines.append(f"decryption latency spread: {100 * self.decrypt_spread:.3f}%")
            lines.append("")
        if self.throughput:
            lines.append(f"quorums  requests  makespan_ms  {self.op}_ops_per_s")
            for r in self.throughput:
                lines.append(f"{r.quorums:7d} {r.requests:9d} {r.makespan_ms:12.1f} {r.ops_per_s:14.2f}")
            slope, intercept, resid = self.throughput_fit()
            lines.append(f"linear fit: {slope:.3f} ops/s per quorum + {intercept:.3f}, "
                         f"max residual {100 * resid:.4f}%")
            lines.append("")
        for name, ok in self.shape_checks().items():
            lines.append(f"[{'ok' if ok else 'FAIL'}] {name}")
        return "\n".join(lines)


def _count(board: Board, op: Op, since: int) -> int:
    tr = board.transcript
    recs = tr.records[since:]
    return sum(1 for r in recs if r.action == "route" and peek_header(r.envelope)[3] == op)


def latency_sweep(sizes: Sequence[int], params: Optional[DomainParams] = None,
                  costs: Optional[Mapping[str, float]] = None, seed: int = 0,
                  reps: int = 3) -> List[LatencyRow]:
    params = params or transparent(257)
    rows = []
    for t in sizes:
        board = Board.build(params, (t,), seed=seed, seal_responses=False)
        model = LatencyModel(board.fabric, costs)
        host, q = board.host, board.quorum()
        rng = random.Random(f"bench/{seed}/{t}")
        mark = len(board.transcript)
        model.reset()
        key = host.dkpg(q)
        keygen = model.makespan
        hashes = _count(board, Op.KEYGEN_STORE_HASH, mark)
        pubkeys = _count(board, Op.KEYGEN_STORE_PUBKEY, mark)
        host.cache(q, key.key_id, reps)
        dec, sig, rounds = [], [], set()
        for _ in range(reps):
            m = base_mul(rng.randrange(1, params.n), params)
            ct = encrypt(params, m, key.Y_agg, rng)
            model.reset()
            mark = len(board.transcript)
            assert host.decrypt(q, key.key_id, ct) == m
            dec.append(model.makespan)
            host_sends = {r.slot for r in board.transcript.records[mark:]
                          if r.action == "route" and is_host(peek_header(r.envelope)[0])}
            rounds.add(len(host_sends))
            model.reset()
            host.sign(q, key.key_id, rng.randbytes(16))
            sig.append(model.makespan)
        rows.append(LatencyRow(t, keygen, statistics.fmean(dec), statistics.fmean(sig),
                               hashes, pubkeys, max(rounds)))
    return rows


def throughput_sweep(counts: Sequence[int], t: int = 3, requests: int = 840, op: str = "decrypt",
                     params: Optional[DomainParams] = None,
                     costs: Optional[Mapping[str, float]] = None, seed: int = 0) -> List[ThroughputRow]:
    """Queue ``requests`` operations round-robin over ``N`` quorums of size ``t``."""
    params = params or transparent(257)
    if op not in ("decrypt", "sign"):
        raise ValueError("throughput op must be decrypt or sign")
    rows = []
    for count in counts:
        board = Board.build(params, [t] * count, seed=seed, seal_responses=False)
        model = LatencyModel(board.fabric, costs)
        host = board.host
        rng = random.Random(f"bench/tp/{seed}/{count}")
        quorums = list(board.quorums.values())
        keys = {q.quorum_id: host.dkpg(q) for q in quorums}
        if op == "sign":
            per = -(-requests // count)
            for q in quorums:
                host.cache(q, keys[q.quorum_id].key_id, per)
        model.reset()
        model.issue_at = 0.0
        for i in range(requests):
            q = quorums[i % count]
            key = keys[q.quorum_id]
            if op == "decrypt":
                m = base_mul(rng.randrange(1, params.n), params)
                host.decrypt(q, key.key_id, encrypt(params, m, key.Y_agg, rng))
            else:
                host.sign(q, key.key_id, rng.randbytes(16))
        span = model.makespan
        rows.append(ThroughputRow(count, requests, span, 1000.0 * requests / span))
    return rows


def run_bench(sizes: Sequence[int] = tuple(range(1, 11)), counts: Sequence[int] = tuple(range(1, 9)),
              t: int = 3, requests: int = 840, op: str = "decrypt",
              params: Optional[DomainParams] = None, costs: Optional[Mapping[str, float]] = None,
              seed: int = 0) -> BenchReport:
    report = BenchReport(op=op)
    report.costs = dict(DEFAULT_COSTS, **(costs or {}))
    if sizes:
        report.latency = latency_sweep(sizes, params, costs, seed)
    if counts:
        report.throughput = throughput_sweep(counts, t, requests, op, params, costs, seed)
    return report
