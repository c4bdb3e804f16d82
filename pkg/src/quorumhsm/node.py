"""Simulated processing IC.

A node is a strictly sequential state machine (think smartcard): it accepts
signed envelopes, checks them against its ACL or peer directory, runs one
protocol step and answers with envelopes signed by its own identity key.
Secret material (``x_i``, the PRF key ``s``, the identity key) never leaves
the object except through :meth:`ICNode.export_state`, which models the
emulator's persistence, not anything on the bus.
"""

from __future__ import annotations

import enum
import logging
import random
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .elgamal import dleq_prove, open_sealed, seal
from .errors import (
    AccessDenied,
    CommitmentFailure,
    LifecycleError,
    NonOperational,
    ProtocolError,
    ProtocolOrderError,
    QuorumError,
    ReplayRejected,
    SetupError,
    UnknownKey,
)
from .group import DIGEST_LEN, DomainParams, GroupElement, Scalar, base_mul, scalar_rand
from .multisig import JLedger, nonce_point, sign_share
from .threshold import RNG_SHARE_LEN, KeyTriplet, commit_verify, secret_share, share_aggr, triplet_gen
from .wire import (
    BROADCAST,
    FLAG_PROOF,
    FLAG_SEAL,
    RESPONSE_BIT,
    Envelope,
    Op,
    Status,
    WireError,
    is_host,
    response_payload,
)

log = logging.getLogger(__name__)

MAX_CACHE_BATCH = 1024


class Perm(enum.IntFlag):
    KEYGEN = 1
    DECRYPT = 2
    SIGN = 4
    RNG = 8
    KEYPROP = 16
    ALL = 31


HOST_OPS = {
    Op.KEYGEN_INIT: Perm.KEYGEN,
    Op.KEYGEN_FINALIZE: Perm.KEYGEN,
    Op.DEC_SHARE: Perm.DECRYPT,
    Op.CACHE_NONCE: Perm.SIGN,
    Op.SIGN: Perm.SIGN,
    Op.RNG: Perm.RNG,
    Op.KEYPROP_PREPARE: Perm.KEYPROP,
    Op.KEYPROP_SPLIT: Perm.KEYPROP,
    Op.KEYPROP_FINALIZE: Perm.KEYPROP,
}
PEER_OPS = {Op.KEYGEN_STORE_HASH, Op.KEYGEN_STORE_PUBKEY, Op.KEYGEN_GET_PUBKEY, Op.KEYPROP_SHARE}

_STATUS_FOR = [
    (AccessDenied, Status.ACCESS_DENIED),
    (ProtocolOrderError, Status.PROTOCOL_ORDER),
    (CommitmentFailure, Status.COMMITMENT_FAILURE),
    (ReplayRejected, Status.REPLAY_REJECTED),
    (UnknownKey, Status.UNKNOWN_KEY),
    (LifecycleError, Status.LIFECYCLE),
    (NonOperational, Status.NON_OPERATIONAL),
    (ProtocolError, Status.BAD_REQUEST),
]


class Lifecycle(enum.Enum):
    UNINITIALIZED = "uninitialized"
    OPERATIONAL = "operational"


class Phase(enum.Enum):
    IDLE = "idle"
    COMMITTED = "committed"
    REVEALED = "revealed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class Certificate:
    node_id: int
    public_key: GroupElement
    issuer: str = "operator"
    vendor: str = ""


@dataclass
class NodeIdentity:
    node_id: int
    secret: Scalar
    certificate: Certificate

    def __post_init__(self):
        if self.certificate.node_id != self.node_id:
            raise ValueError("certificate issued for a different node")
        if base_mul(self.secret, self.secret.params) != self.certificate.public_key:
            raise ValueError("certificate public key does not match the signing key")

    @classmethod
    def issue(cls, node_id: int, params: DomainParams, rng: random.Random,
              issuer: str = "operator", vendor: str = "") -> "NodeIdentity":
        sk = scalar_rand(params, rng)
        while sk.value == 0:
            sk = scalar_rand(params, rng)
        cert = Certificate(node_id, base_mul(sk, params), issuer, vendor)
        return cls(node_id, sk, cert)

    def __repr__(self):
        return f"NodeIdentity(node_id={self.node_id}, certificate={self.certificate!r})"


@dataclass(frozen=True)
class AclEntry:
    host: int
    public_key: GroupElement
    permissions: Perm = Perm.ALL
    seal_key: Optional[GroupElement] = None


@dataclass
class KeySlot:
    x: Scalar
    Y: GroupElement
    Y_agg: GroupElement
    s: bytes
    ledger: JLedger = field(default_factory=JLedger)
    shares: Dict[int, GroupElement] = field(default_factory=dict)

    def __repr__(self):
        return f"KeySlot(Y={self.Y!r}, Y_agg={self.Y_agg!r}, mark={self.ledger.mark})"


@dataclass
class DkgSession:
    session_id: bytes
    members: Optional[Tuple[int, ...]] = None
    triplet: Optional[KeyTriplet] = None
    hashes: Dict[int, bytes] = field(default_factory=dict)
    pubkeys: Dict[int, GroupElement] = field(default_factory=dict)
    phase: Phase = Phase.IDLE
    failure: str = ""

    def advance_to(self, phase: Phase) -> None:
        order = [Phase.IDLE, Phase.COMMITTED, Phase.REVEALED]
        if phase is not Phase.ABORTED:
            if self.phase is Phase.ABORTED or order.index(phase) <= order.index(self.phase):
                raise ProtocolOrderError(f"cannot move from {self.phase.value} to {phase.value}")
        self.phase = phase


@dataclass
class Propagation:
    key_id: bytes
    Y_agg: GroupElement
    sources: Tuple[int, ...]
    incoming: Dict[int, Scalar] = field(default_factory=dict)


@dataclass
class NodeState:
    params: DomainParams
    identity: NodeIdentity
    acl: Dict[int, AclEntry]
    peers: Dict[int, Certificate]
    key_slots: Dict[bytes, KeySlot] = field(default_factory=dict)
    sessions: Dict[bytes, DkgSession] = field(default_factory=dict)
    propagations: Dict[bytes, Propagation] = field(default_factory=dict)
    seen: Set[Tuple[int, int]] = field(default_factory=set)


def encode_ids(ids: Sequence[int]) -> bytes:
    return bytes([len(ids)]) + b"".join(struct.pack(">H", i) for i in ids)


def decode_ids(data: bytes, offset: int = 0) -> Tuple[Tuple[int, ...], int]:
    if len(data) <= offset:
        raise ProtocolError("missing id list")
    count = data[offset]
    end = offset + 1 + 2 * count
    if len(data) < end:
        raise ProtocolError("truncated id list")
    ids = tuple(struct.unpack_from(">H", data, offset + 1 + 2 * i)[0] for i in range(count))
    return ids, end


class ICNode:
    """One processing IC. Feed it envelope bytes with :meth:`receive`."""

    def __init__(self, node_id: int, seed: int = 0, vendor: str = ""):
        if not 0 < node_id < 0x8000:
            raise ValueError("node ids must be in 1..0x7fff")
        self.node_id = node_id
        self.vendor = vendor
        self.rng = random.Random(f"ic/{node_id}/{seed}")
        self.lifecycle = Lifecycle.UNINITIALIZED
        self.state: Optional[NodeState] = None
        self.events: List[Tuple[str, str]] = []
        self.responses: List[Envelope] = []
        self._seq = 0
        self._outbox: List[Envelope] = []
        self._handlers: Dict[int, Callable[[Envelope], Optional[bytes]]] = {
            Op.KEYGEN_INIT: self._op_keygen_init,
            Op.KEYGEN_STORE_HASH: self._op_store_hash,
            Op.KEYGEN_STORE_PUBKEY: self._op_store_pubkey,
            Op.KEYGEN_GET_PUBKEY: self._op_get_pubkey,
            Op.KEYGEN_FINALIZE: self._op_keygen_finalize,
            Op.DEC_SHARE: self._op_dec_share,
            Op.CACHE_NONCE: self._op_cache_nonce,
            Op.SIGN: self._op_sign,
            Op.RNG: self._op_rng,
            Op.KEYPROP_PREPARE: self._op_keyprop_prepare,
            Op.KEYPROP_SPLIT: self._op_keyprop_split,
            Op.KEYPROP_SHARE: self._op_keyprop_share,
            Op.KEYPROP_FINALIZE: self._op_keyprop_finalize,
        }

    def __repr__(self):
        return f"{type(self).__name__}({self.node_id}, {self.lifecycle.value})"

    # lifecycle

    def provision(self, params: DomainParams, acl: Iterable[AclEntry], identity: NodeIdentity,
                  peers: Iterable[Certificate] = ()) -> bool:
        if self.lifecycle is Lifecycle.OPERATIONAL:
            raise LifecycleError(f"node {self.node_id} is already provisioned; reset it first")
        if identity.node_id != self.node_id:
            raise SetupError("identity belongs to another node")
        if identity.secret.params != params:
            raise SetupError("identity was issued for different domain parameters")
        self.state = NodeState(
            params=params,
            identity=identity,
            acl={e.host: e for e in acl},
            peers={c.node_id: c for c in peers if c.node_id != self.node_id},
        )
        self.lifecycle = Lifecycle.OPERATIONAL
        return True

    def reset(self) -> None:
        self.state = None
        self.lifecycle = Lifecycle.UNINITIALIZED

    @property
    def certificate(self) -> Certificate:
        self._require_operational()
        return self.state.identity.certificate

    def _require_operational(self) -> None:
        if self.lifecycle is not Lifecycle.OPERATIONAL:
            raise NonOperational(f"node {self.node_id} is not operational")

    # message plumbing

    def receive(self, data: bytes) -> List[bytes]:
        try:
            env = Envelope.from_bytes(data)
        except (WireError, ValueError) as exc:
            self._event("malformed", str(exc))
            return []
        return [e.to_bytes() for e in self.handle(env)]

    def handle(self, env: Envelope) -> List[Envelope]:
        if env.dst not in (self.node_id, BROADCAST):
            self._event("misrouted", env.describe())
            return []
        if env.is_response:
            self._event("response", env.describe())
            self.responses.append(env)
            return []
        if self.lifecycle is not Lifecycle.OPERATIONAL:
            return [self._reply(env, Status.NON_OPERATIONAL, sign=False)]
        st = self.state
        if (env.src, env.seq) in st.seen:
            self._event("duplicate", env.describe())
            return []
        try:
            self._authenticate(env)
        except AccessDenied as exc:
            self._event("access-denied", str(exc))
            return [self._reply(env, Status.ACCESS_DENIED, str(exc).encode())]
        st.seen.add((env.src, env.seq))
        self._outbox = []
        try:
            body = self._handlers[Op(env.opcode)](env)
        except QuorumError as exc:
            self._event("error", f"{type(exc).__name__}: {exc}")
            out = [self._reply(env, self._status_for(exc), str(exc).encode())]
            return out + self._drain()
        except (WireError, ValueError) as exc:
            self._event("error", f"bad request: {exc}")
            return [self._reply(env, Status.BAD_REQUEST, str(exc).encode())] + self._drain()
        if body is None:
            return self._drain()
        return [self._reply(env, Status.OK, body)] + self._drain()

    def _drain(self) -> List[Envelope]:
        out, self._outbox = self._outbox, []
        return out

    @staticmethod
    def _status_for(exc: QuorumError) -> Status:
        for cls, status in _STATUS_FOR:
            if isinstance(exc, cls):
                return status
        return Status.BAD_REQUEST

    def _event(self, kind: str, detail: str) -> None:
        self.events.append((kind, detail))
        log.debug("ic%d %s: %s", self.node_id, kind, detail)

    def _authenticate(self, env: Envelope) -> None:
        st = self.state
        try:
            op = Op(env.opcode)
        except ValueError:
            raise AccessDenied(f"unknown opcode 0x{env.opcode:02x}") from None
        if is_host(env.src):
            entry = st.acl.get(env.src)
            if entry is None:
                raise AccessDenied(f"host {env.src:#x} is not on the access list")
            if op not in HOST_OPS:
                raise AccessDenied(f"{op.name} is not a host command")
            if not entry.permissions & HOST_OPS[op]:
                raise AccessDenied(f"host {env.src:#x} may not issue {op.name}")
            if not env.verify(entry.public_key):
                raise AccessDenied("host signature does not verify")
            return
        cert = st.peers.get(env.src)
        if cert is None:
            raise AccessDenied(f"unknown sender {env.src}")
        if op not in PEER_OPS:
            raise AccessDenied(f"{op.name} may not be issued by a peer")
        if not env.verify(cert.public_key):
            raise AccessDenied(f"signature of ic{env.src} does not verify")

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _reply(self, req: Envelope, status: Status, body: bytes = b"", sign: bool = True) -> Envelope:
        env = Envelope(self.node_id, req.src, self._next_seq(), req.opcode | RESPONSE_BIT,
                       req.ident, response_payload(status, req.seq, body))
        if sign and self.state is not None:
            env = env.signed(self.state.identity.secret)
        return env

    def _emit(self, dst: int, op: Op, ident: bytes, payload: bytes) -> None:
        env = Envelope(self.node_id, dst, self._next_seq(), int(op), ident, payload)
        self._outbox.append(env.signed(self.state.identity.secret))

    def _slot(self, key_id: bytes) -> KeySlot:
        slot = self.state.key_slots.get(key_id)
        if slot is None:
            raise UnknownKey(f"no key {key_id.hex()} on ic{self.node_id}")
        return slot

    def _install_key(self, key_id: bytes, x: Scalar, Y_agg: GroupElement,
                     shares: Optional[Dict[int, GroupElement]] = None) -> KeySlot:
        params = self.state.params
        slot = KeySlot(x=x, Y=base_mul(x, params), Y_agg=Y_agg, s=self.rng.randbytes(32),
                       shares=dict(shares or {}))
        self.state.key_slots[key_id] = slot
        return slot

    # key generation

    def _session(self, sid: bytes) -> DkgSession:
        sess = self.state.sessions.get(sid)
        if sess is None:
            sess = self.state.sessions[sid] = DkgSession(sid)
        return sess

    def _make_triplet(self, sess: DkgSession) -> KeyTriplet:
        return triplet_gen(self.state.params, self.rng)

    def _send_commitments(self, sess: DkgSession) -> None:
        for peer in sess.members:
            if peer != self.node_id:
                self._emit(peer, Op.KEYGEN_STORE_HASH, sess.session_id, sess.triplet.h)

    def _reveal(self, sess: DkgSession) -> None:
        for peer in sess.members:
            if peer != self.node_id:
                self._emit(peer, Op.KEYGEN_STORE_PUBKEY, sess.session_id, sess.triplet.Y.encode())

    def _advance(self, sess: DkgSession) -> None:
        members = sess.members
        if members is None or sess.triplet is None:
            return
        if sess.phase is Phase.IDLE and all(m in sess.hashes for m in members):
            sess.advance_to(Phase.COMMITTED)
            sess.pubkeys[self.node_id] = sess.triplet.Y
            self._reveal(sess)
        if sess.phase is Phase.COMMITTED and all(m in sess.pubkeys for m in members):
            Y = [sess.pubkeys[m] for m in members]
            H = [sess.hashes[m] for m in members]
            if not commit_verify(Y, H):
                sess.advance_to(Phase.ABORTED)
                sess.failure = "commitment-failure"
                self._event("abort", f"commitment check failed in session {sess.session_id.hex()}")
                return
            sess.advance_to(Phase.REVEALED)
            Y_agg = share_aggr(Y)
            if sess.session_id not in self.state.key_slots:
                slot = KeySlot(x=sess.triplet.x, Y=sess.triplet.Y, Y_agg=Y_agg,
                               s=self.rng.randbytes(32), shares=dict(zip(members, Y)))
                self.state.key_slots[sess.session_id] = slot

    def _op_keygen_init(self, env: Envelope) -> Optional[bytes]:
        members, _ = decode_ids(env.payload)
        if self.node_id not in members:
            return None
        if len(set(members)) != len(members):
            raise ProtocolError("duplicate quorum members")
        unknown = [m for m in members if m != self.node_id and m not in self.state.peers]
        if unknown:
            raise ProtocolError(f"no certificate for members {unknown}")
        if env.ident in self.state.key_slots:
            raise ProtocolOrderError("a key with this id already exists")
        sess = self._session(env.ident)
        if sess.triplet is not None or sess.phase is not Phase.IDLE:
            raise ProtocolOrderError("session already started")
        sess.members = tuple(sorted(members))
        for src in [s for s in sess.hashes if s not in sess.members]:
            del sess.hashes[src]
        sess.triplet = self._make_triplet(sess)
        sess.hashes[self.node_id] = sess.triplet.h
        self._send_commitments(sess)
        self._advance(sess)
        return sess.triplet.h

    def _op_store_hash(self, env: Envelope) -> Optional[bytes]:
        if len(env.payload) != DIGEST_LEN:
            raise ProtocolError("commitment must be a 32-byte digest")
        sess = self._session(env.ident)
        if sess.phase is Phase.ABORTED:
            raise ProtocolOrderError("session aborted")
        if sess.members is not None and env.src not in sess.members:
            raise ProtocolError(f"ic{env.src} is not a member of this session")
        if sess.phase is not Phase.IDLE:
            raise ProtocolOrderError("commitment round already closed")
        prev = sess.hashes.get(env.src)
        if prev is not None and prev != env.payload:
            sess.advance_to(Phase.ABORTED)
            sess.failure = "commitment-failure"
            raise CommitmentFailure(f"ic{env.src} sent two different commitments")
        sess.hashes[env.src] = env.payload
        self._advance(sess)
        return None

    def _op_store_pubkey(self, env: Envelope) -> Optional[bytes]:
        sess = self.state.sessions.get(env.ident)
        if sess is None or sess.phase is not Phase.COMMITTED:
            phase = sess.phase.value if sess else "none"
            raise ProtocolOrderError(f"public share received in phase {phase}")
        if env.src not in sess.members:
            raise ProtocolError(f"ic{env.src} is not a member of this session")
        Y = self.state.params.decode_element(env.payload)
        prev = sess.pubkeys.get(env.src)
        if prev is not None:
            if prev != Y:
                sess.advance_to(Phase.ABORTED)
                sess.failure = "commitment-failure"
                raise CommitmentFailure(f"ic{env.src} revealed two different shares")
            return None
        sess.pubkeys[env.src] = Y
        self._on_pubkey(sess, env.src)
        self._advance(sess)
        return None

    def _on_pubkey(self, sess: DkgSession, src: int) -> None:
        """Hook for adversarial subclasses."""

    def _op_get_pubkey(self, env: Envelope) -> Optional[bytes]:
        sess = self.state.sessions.get(env.ident)
        if sess is None or sess.members is None or env.src not in sess.members:
            raise ProtocolOrderError("no such session for this requester")
        if sess.phase not in (Phase.COMMITTED, Phase.REVEALED):
            raise ProtocolOrderError("public share withheld until every commitment is held")
        return sess.triplet.Y.encode()

    def _op_keygen_finalize(self, env: Envelope) -> Optional[bytes]:
        sess = self.state.sessions.get(env.ident)
        if sess is None or sess.members is None:
            raise ProtocolOrderError("unknown key generation session")
        if sess.phase is Phase.ABORTED:
            raise CommitmentFailure(sess.failure or "session aborted")
        if sess.phase is not Phase.REVEALED:
            raise ProtocolOrderError(f"exchange incomplete (phase {sess.phase.value})")
        slot = self.state.key_slots[env.ident]
        body = slot.Y_agg.encode() + bytes([len(sess.members)])
        for m in sess.members:
            body += struct.pack(">H", m) + sess.pubkeys[m].encode()
        return body

    # decryption, signing, randomness

    def _decryption_share(self, slot: KeySlot, C1: GroupElement) -> GroupElement:
        return (-slot.x) * C1

    def _share_proof(self, slot: KeySlot, C1: GroupElement, A: GroupElement):
        return dleq_prove(slot.x, C1, slot.Y, (-slot.x) * C1, self.rng)

    def _sealed_for(self, env: Envelope, body: bytes) -> bytes:
        entry = self.state.acl[env.src]
        if entry.seal_key is None:
            raise ProtocolError("no response encryption key registered for this host")
        return seal(self.state.params, entry.seal_key, body, self.rng)

    def _op_dec_share(self, env: Envelope) -> Optional[bytes]:
        slot = self._slot(env.ident)
        if not env.payload:
            raise ProtocolError("missing flags")
        flags = env.payload[0]
        C1 = self.state.params.decode_element(env.payload[1:])
        A = self._decryption_share(slot, C1)
        body = A.encode()
        if flags & FLAG_PROOF:
            body += self._share_proof(slot, C1, A).to_bytes()
        if flags & FLAG_SEAL:
            body = self._sealed_for(env, body)
        return body

    def _op_cache_nonce(self, env: Envelope) -> Optional[bytes]:
        slot = self._slot(env.ident)
        if len(env.payload) != 10:
            raise ProtocolError("cache request is j_start u64 | count u16")
        j0, count = struct.unpack(">QH", env.payload)
        if j0 < 1 or not 0 < count <= MAX_CACHE_BATCH:
            raise ProtocolError("bad index range")
        params = self.state.params
        return b"".join(nonce_point(slot.s, j, params).encode() for j in range(j0, j0 + count))

    def _consume(self, slot: KeySlot, j: int) -> None:
        slot.ledger.consume(j)

    def _op_sign(self, env: Envelope) -> Optional[bytes]:
        slot = self._slot(env.ident)
        params = self.state.params
        if len(env.payload) != DIGEST_LEN + 8 + params.element_len:
            raise ProtocolError("sign request is H(m) | j u64 | R_j")
        Hm = env.payload[:DIGEST_LEN]
        j = struct.unpack_from(">Q", env.payload, DIGEST_LEN)[0]
        R_j = params.decode_element(env.payload[DIGEST_LEN + 8:])
        # burn j before computing anything
        self._consume(slot, j)
        sigma, eps = sign_share(slot.x, slot.s, Hm, j, R_j)
        return sigma.to_bytes() + eps.to_bytes() + struct.pack(">Q", j)

    def _op_rng(self, env: Envelope) -> Optional[bytes]:
        if not env.payload:
            raise ProtocolError("missing flags")
        flags = env.payload[0]
        if len(env.payload) > 1:
            members, _ = decode_ids(env.payload, 1)
            if members and self.node_id not in members:
                return None
        b = self.rng.randbytes(RNG_SHARE_LEN)
        if flags & FLAG_SEAL:
            return self._sealed_for(env, b)
        return b

    # key propagation

    def _op_keyprop_prepare(self, env: Envelope) -> Optional[bytes]:
        params = self.state.params
        w = params.element_len
        if env.ident in self.state.key_slots:
            raise ProtocolOrderError("key already installed on this node")
        Y_agg = params.decode_element(env.payload[:w])
        sources, _ = decode_ids(env.payload, w)
        if not sources or any(s not in self.state.peers for s in sources):
            raise ProtocolError("propagation sources must be known peers")
        self.state.propagations[env.ident] = Propagation(env.ident, Y_agg, tuple(sources))
        return b""

    def _op_keyprop_split(self, env: Envelope) -> Optional[bytes]:
        slot = self._slot(env.ident)
        targets, _ = decode_ids(env.payload)
        if not targets:
            raise ProtocolError("no propagation targets")
        if self.node_id in targets or any(t not in self.state.peers for t in targets):
            raise ProtocolError("targets must be other known nodes")
        if len(targets) == 1:
            shares = [slot.x]
        else:
            shares = list(secret_share(slot.x, len(targets), self.rng))
        for target, share in zip(targets, shares):
            pk = self.state.peers[target].public_key
            self._emit(target, Op.KEYPROP_SHARE, env.ident,
                       seal(self.state.params, pk, share.to_bytes(), self.rng))
        return b""

    def _op_keyprop_share(self, env: Envelope) -> Optional[bytes]:
        prop = self.state.propagations.get(env.ident)
        if prop is None:
            raise ProtocolOrderError("no propagation prepared for this key")
        if env.src not in prop.sources:
            raise ProtocolError(f"ic{env.src} is not a propagation source")
        if env.src in prop.incoming:
            raise ProtocolError(f"duplicate share from ic{env.src}")
        raw = open_sealed(self.state.params, self.state.identity.secret, env.payload)
        prop.incoming[env.src] = self.state.params.decode_scalar(raw)
        if len(prop.incoming) == len(prop.sources):
            self.keyprop_absorb([prop.incoming[s] for s in prop.sources], env.ident)
        return None

    def keyprop_absorb(self, incoming: Sequence[Scalar], key_id: bytes) -> bool:
        """Install ``sum(incoming) mod n`` as this node's share of ``key_id``."""
        self._require_operational()
        prop = self.state.propagations.get(key_id)
        if prop is None:
            raise ProtocolOrderError("key metadata must be installed before absorbing shares")
        if len(incoming) != len(prop.sources):
            raise ProtocolError(f"expected {len(prop.sources)} shares, got {len(incoming)}")
        x = share_aggr(list(incoming))
        self._install_key(key_id, x, prop.Y_agg)
        del self.state.propagations[key_id]
        return True

    def _op_keyprop_finalize(self, env: Envelope) -> Optional[bytes]:
        slot = self.state.key_slots.get(env.ident)
        if slot is None:
            raise ProtocolOrderError("propagated share not complete")
        return slot.Y.encode()

    # persistence (emulator state files, never the bus)

    def export_state(self) -> dict:
        self._require_operational()
        st = self.state
        return {
            "node_id": self.node_id,
            "vendor": self.vendor,
            "rng": _rng_state_to_json(self.rng),
            "seq": self._seq,
            "identity": st.identity.secret.value,
            "acl": [{"host": e.host, "pk": e.public_key.encode().hex(), "perm": int(e.permissions),
                     "seal": e.seal_key.encode().hex() if e.seal_key else None}
                    for e in st.acl.values()],
            "peers": [{"id": c.node_id, "pk": c.public_key.encode().hex(), "issuer": c.issuer,
                       "vendor": c.vendor} for c in st.peers.values()],
            "keys": {kid.hex(): {"x": s.x.value, "Y_agg": s.Y_agg.encode().hex(), "s": s.s.hex(),
                                  "mark": s.ledger.mark, "window": sorted(s.ledger.window),
                                  "shares": {str(k): v.encode().hex() for k, v in s.shares.items()}}
                     for kid, s in st.key_slots.items()},
            "seen": sorted([list(x) for x in st.seen]),
        }

    def import_state(self, params: DomainParams, data: dict) -> None:
        el = lambda h: params.decode_element(bytes.fromhex(h))  # noqa: E731
        secret = Scalar(params, data["identity"])
        identity = NodeIdentity(self.node_id, secret,
                                Certificate(self.node_id, base_mul(secret, params), vendor=self.vendor))
        acl = [AclEntry(e["host"], el(e["pk"]), Perm(e["perm"]), el(e["seal"]) if e["seal"] else None)
               for e in data["acl"]]
        peers = [Certificate(p["id"], el(p["pk"]), p["issuer"], p["vendor"]) for p in data["peers"]]
        self.reset()
        self.provision(params, acl, identity, peers)
        self.rng.setstate(_rng_state_from_json(data["rng"]))
        self._seq = data["seq"]
        for kid, k in data["keys"].items():
            x = Scalar(params, k["x"])
            ledger = JLedger()
            ledger.mark = k["mark"]
            ledger.window = set(k["window"])
            self.state.key_slots[bytes.fromhex(kid)] = KeySlot(
                x=x, Y=base_mul(x, params), Y_agg=el(k["Y_agg"]), s=bytes.fromhex(k["s"]),
                ledger=ledger, shares={int(i): el(v) for i, v in k["shares"].items()})
        self.state.seen = {tuple(x) for x in data["seen"]}


def _rng_state_to_json(rng: random.Random):
    version, internal, gauss = rng.getstate()
    return [version, list(internal), gauss]


def _rng_state_from_json(data):
    version, internal, gauss = data
    return (version, tuple(internal), gauss)
