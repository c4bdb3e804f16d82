"""The untrusted controller and its buses.

Time is a logical slot counter.  Everything routed in slot ``s`` is delivered
in slot ``s + 1`` (plus any adversarial delay), in ``(due slot, src, seq)``
order, so a run is a pure function of its configuration and seed.  Every
routing decision and delivery is appended to the transcript, which is also
the adversary's eavesdropping view.
"""

from __future__ import annotations

import hashlib
import heapq
import io
import logging
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .errors import RoutingError
from .group import Scalar
from .wire import (
    BROADCAST,
    PAYLOAD_OFFSET,
    RESPONSE_BIT,
    Envelope,
    Op,
    WireError,
    is_host,
    peek_header,
)

log = logging.getLogger(__name__)

ACTIONS = ("drop", "modify", "duplicate", "delay", "inject")


def _opcode(value) -> Optional[int]:
    if value is None or isinstance(value, int):
        return value
    return int(Op[str(value).upper()])


@dataclass
class Rule:
    """One controller rule: a match predicate and the action taken on a match.

    ``nth`` restricts the rule to the nth matching envelope (1-based);
    ``max_hits`` caps how often it fires; ``probability`` draws from the
    adversary's seeded generator.  ``modify`` XORs ``xor`` into the payload byte
    at ``offset`` (or replaces the payload with ``replace``); with ``resign`` it
    re-signs the result, which only works for envelopes whose sender key the
    adversary holds.
    """

    action: str
    src: Optional[int] = None
    dst: Optional[int] = None
    opcode: Optional[int] = None
    response: Optional[bool] = None
    nth: Optional[int] = None
    max_hits: Optional[int] = None
    probability: float = 1.0
    offset: int = 0
    xor: int = 0x01
    replace: Optional[bytes] = None
    resign: bool = False
    slots: int = 1
    envelope: Optional[bytes] = None
    matched: int = field(default=0, compare=False)
    hits: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown rule action {self.action!r}")
        self.opcode = _opcode(self.opcode)

    def matches(self, src: int, dst: int, opcode: int) -> bool:
        if self.src is not None and src != self.src:
            return False
        if self.dst is not None and dst != self.dst:
            return False
        if self.opcode is not None and (opcode & ~RESPONSE_BIT) != self.opcode:
            return False
        if self.response is not None and bool(opcode & RESPONSE_BIT) != self.response:
            return False
        return True


@dataclass
class AdversarySpec:
    """Who is malicious and what the controller does to traffic.

    ``malicious_nodes`` maps node id to a behaviour name understood by
    :func:`quorumhsm.adversary.make_node`.  With ``collusion_channel`` the
    controller holds the signing keys of every malicious node.
    """

    malicious_nodes: Dict[int, str] = field(default_factory=dict)
    controller_actions: List[Rule] = field(default_factory=list)
    collusion_channel: bool = False
    seed: int = 0

    @property
    def malicious(self) -> frozenset:
        return frozenset(self.malicious_nodes)


@dataclass(frozen=True)
class TranscriptRecord:
    slot: int
    envelope: bytes
    action: str


class Transcript:
    """Append-only, totally ordered log of everything the controller saw and did."""

    def __init__(self):
        self.records: List[TranscriptRecord] = []

    def append(self, slot: int, envelope: bytes, action: str) -> None:
        self.records.append(TranscriptRecord(slot, bytes(envelope), action))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_bytes(self) -> bytes:
        out = io.BytesIO()
        for r in self.records:
            act = r.action.encode()
            out.write(struct.pack(">QB", r.slot, len(act)))
            out.write(act)
            out.write(struct.pack(">I", len(r.envelope)))
            out.write(r.envelope)
        return out.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transcript":
        t = cls()
        off = 0
        while off < len(data):
            slot, alen = struct.unpack_from(">QB", data, off)
            off += 9
            action = data[off:off + alen].decode()
            off += alen
            (elen,) = struct.unpack_from(">I", data, off)
            off += 4
            t.append(slot, data[off:off + elen], action)
            off += elen
        return t

    def digest(self) -> str:
        return hashlib.sha3_256(self.to_bytes()).hexdigest()

    def lines(self) -> List[str]:
        out = []
        for r in self.records:
            try:
                desc = Envelope.from_bytes(r.envelope).describe()
            except (WireError, ValueError):
                desc = f"<{len(r.envelope)} undecodable bytes>"
            out.append(f"{r.slot:6d} {r.action:<14} {desc}")
        return out

    def envelopes(self, action: Optional[str] = None) -> List[Envelope]:
        """Decoded envelopes, by default one per routed message."""
        action = action or "route"
        out = []
        for r in self.records:
            if r.action.split(":")[0] != action.split(":")[0]:
                continue
            try:
                out.append(Envelope.from_bytes(r.envelope))
            except (WireError, ValueError):
                pass
        return out

    def count(self, opcode: int, response: bool = False, action: str = "route") -> int:
        want = opcode | (RESPONSE_BIT if response else 0)
        return sum(1 for e in self.envelopes(action) if e.opcode == want)


Observer = Callable[[int, int, bytes, List[bytes]], None]


class Fabric:
    def __init__(self, adversary: Optional[AdversarySpec] = None, seed: int = 0):
        self.adversary = adversary or AdversarySpec()
        self.rng = random.Random(f"fabric/{seed}/{self.adversary.seed}")
        self.slot = 0
        self.nodes: Dict[int, object] = {}
        self.inboxes: Dict[int, List[bytes]] = {}
        self.transcript = Transcript()
        self.observers: List[Observer] = []
        self.colluding_keys: Dict[int, Scalar] = {}
        self._queue: List[Tuple[int, int, int, int, bytes]] = []
        self._counter = 0

    def attach_node(self, node) -> None:
        if node.node_id in self.nodes:
            raise ValueError(f"node {node.node_id} already attached")
        self.nodes[node.node_id] = node

    def attach_host(self, addr: int) -> List[bytes]:
        if not is_host(addr):
            raise ValueError("host addresses start at 0x8000")
        return self.inboxes.setdefault(addr, [])

    def grant_key(self, node_id: int, key: Scalar) -> None:
        """Hand a malicious node's signing key to the controller (collusion)."""
        if self.adversary.collusion_channel and node_id in self.adversary.malicious:
            self.colluding_keys[node_id] = key

    @property
    def quiescent(self) -> bool:
        return not self._queue

    def _known(self, dst: int) -> bool:
        return dst == BROADCAST or dst in self.nodes or dst in self.inboxes

    def _schedule(self, data: bytes, delay: int = 0) -> None:
        src, _, seq, _ = peek_header(data)
        self._counter += 1
        heapq.heappush(self._queue, (self.slot + 1 + delay, src, seq, self._counter, data))

    def route(self, data: bytes) -> List[str]:
        """Pass one envelope through the controller; returns the actions taken."""
        try:
            src, dst, seq, opcode = peek_header(data)
        except WireError:
            self.transcript.append(self.slot, data, "malformed")
            return ["malformed"]
        if not self._known(dst):
            self.transcript.append(self.slot, data, "routing-error")
            raise RoutingError(f"unknown destination {dst} for envelope from {src}")
        self.transcript.append(self.slot, data, "route")
        for rule in self.adversary.controller_actions:
            if not rule.matches(src, dst, opcode):
                continue
            rule.matched += 1
            if rule.nth is not None and rule.matched != rule.nth:
                continue
            if rule.max_hits is not None and rule.hits >= rule.max_hits:
                continue
            if rule.probability < 1.0 and self.rng.random() >= rule.probability:
                continue
            rule.hits += 1
            return self._apply(rule, data)
        self._schedule(data)
        return ["forward"]

    def _apply(self, rule: Rule, data: bytes) -> List[str]:
        if rule.action == "drop":
            self.transcript.append(self.slot, data, "drop")
            return ["drop"]
        if rule.action == "delay":
            self.transcript.append(self.slot, data, f"delay:{rule.slots}")
            self._schedule(data, rule.slots)
            return [f"delay:{rule.slots}"]
        if rule.action == "duplicate":
            self.transcript.append(self.slot, data, "duplicate")
            self._schedule(data)
            self._schedule(data)
            return ["duplicate"]
        if rule.action == "inject":
            self._schedule(data)
            extra = rule.envelope or b""
            try:
                self._schedule(extra)
            except WireError:
                self.transcript.append(self.slot, extra, "malformed")
                return ["forward", "malformed"]
            self.transcript.append(self.slot, extra, "inject")
            return ["forward", "inject"]
        mutated = self._mutate(rule, data)
        self.transcript.append(self.slot, mutated, "modify")
        self._schedule(mutated)
        return ["modify"]

    def _mutate(self, rule: Rule, data: bytes) -> bytes:
        try:
            env = Envelope.from_bytes(data)
        except (WireError, ValueError):
            buf = bytearray(data)
            buf[min(PAYLOAD_OFFSET + rule.offset, len(buf) - 1)] ^= rule.xor
            return bytes(buf)
        if rule.replace is not None:
            payload = bytes(rule.replace)
        else:
            buf = bytearray(env.payload)
            if buf:
                buf[rule.offset % len(buf)] ^= rule.xor
            payload = bytes(buf)
        mutated = Envelope(env.src, env.dst, env.seq, env.opcode, env.ident, payload, env.signature)
        key = self.colluding_keys.get(env.src)
        if rule.resign and key is not None:
            mutated = mutated.signed(key)
        return mutated.to_bytes()

    def step(self) -> int:
        """Advance one slot and deliver everything due; returns deliveries made."""
        self.slot += 1
        due = []
        while self._queue and self._queue[0][0] <= self.slot:
            due.append(heapq.heappop(self._queue))
        delivered = 0
        for _, src, _, _, data in due:
            _, dst, _, _ = peek_header(data)
            if dst == BROADCAST:
                targets = [n for n in sorted(self.nodes) if n != src]
            elif dst in self.nodes:
                targets = [dst]
            elif dst not in self.inboxes:
                self.transcript.append(self.slot, data, "undeliverable")
                continue
            else:
                self.transcript.append(self.slot, data, f"deliver:{dst}")
                self.inboxes[dst].append(data)
                delivered += 1
                for obs in self.observers:
                    obs(self.slot, dst, data, [])
                continue
            for target in targets:
                self.transcript.append(self.slot, data, f"deliver:{target}")
                outbound = self.nodes[target].receive(data)
                delivered += 1
                for obs in self.observers:
                    obs(self.slot, target, data, outbound)
                for out in outbound:
                    try:
                        self.route(out)
                    except RoutingError as exc:
                        log.debug("dropped node output: %s", exc)
        return delivered

    def run(self, budget: int, until: Optional[Callable[[], bool]] = None) -> int:
        """Step until ``until()`` holds, the fabric drains, or ``budget`` slots pass."""
        used = 0
        while used < budget:
            if until is not None and until():
                break
            if until is None and self.quiescent:
                break
            if self.quiescent and until is not None:
                # nothing in flight; waiting longer cannot change the outcome
                break
            self.step()
            used += 1
        return used
