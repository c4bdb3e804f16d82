"""The remote host: drives every protocol through the fabric and checks results.

The host never sees a secret share.  Everything it returns is re-checked from
public data: the aggregate key against the public shares, signatures with
:func:`quorumhsm.multisig.verify`, and (optionally) each decryption share
against its DLEQ proof.
"""

from __future__ import annotations

import logging
import random
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from .elgamal import Ciphertext, DleqProof, aggr_dec, dleq_verify, open_sealed
from .errors import (
    AccessDenied,
    CommitmentFailure,
    IncompleteQuorum,
    InconsistentShare,
    ProtocolError,
    ProtocolOrderError,
    QuorumTimeout,
    ReplayRejected,
    SetupError,
    ShareProofFailure,
    SigningFailed,
    UnknownKey,
)
from .fabric import Fabric
from .group import SCALAR_LEN, DomainParams, GroupElement, Scalar, base_mul, scalar_rand
from .multisig import (
    AggregateSignature,
    NonceCacheEntry,
    SignatureShare,
    aggregate,
    message_digest,
    verify,
)
from .node import AclEntry, Certificate, Perm, encode_ids
from .reliability import k_tolerance  # noqa: F401  (re-exported)
from .threshold import QuorumKey, drng_combine, share_aggr
from .wire import BROADCAST, FLAG_PROOF, FLAG_SEAL, HOST, ID_LEN, Envelope, Op, Status, WireError

log = logging.getLogger(__name__)

_STATUS_ERRORS = {
    Status.COMMITMENT_FAILURE: CommitmentFailure,
    Status.REPLAY_REJECTED: ReplayRejected,
    Status.ACCESS_DENIED: AccessDenied,
    Status.PROTOCOL_ORDER: ProtocolOrderError,
    Status.UNKNOWN_KEY: UnknownKey,
}


@dataclass
class QuorumConfig:
    quorum_id: str
    nodes: Tuple[int, ...]
    threshold: int = 0
    vendors: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = tuple(self.nodes)
        if not self.nodes:
            raise SetupError("a quorum needs at least one node")
        if len(set(self.nodes)) != len(self.nodes):
            raise SetupError(f"quorum {self.quorum_id} lists a node twice")
        if not self.threshold:
            self.threshold = len(self.nodes)
        if self.threshold != len(self.nodes):
            raise SetupError("only k = t quorums are implemented")

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass
class HostIdentity:
    addr: int
    secret: Scalar
    public_key: GroupElement
    seal_secret: Optional[Scalar] = None
    seal_public: Optional[GroupElement] = None

    @classmethod
    def generate(cls, params: DomainParams, rng: random.Random, addr: int = HOST,
                 confidential: bool = True) -> "HostIdentity":
        def nonzero():
            k = scalar_rand(params, rng)
            while k.value == 0:
                k = scalar_rand(params, rng)
            return k
        sk = nonzero()
        seal_sk = nonzero() if confidential else None
        return cls(addr, sk, base_mul(sk, params), seal_sk,
                   base_mul(seal_sk, params) if seal_sk is not None else None)

    def acl_entry(self, permissions: Perm = Perm.ALL) -> AclEntry:
        return AclEntry(self.addr, self.public_key, permissions, self.seal_public)

    def __repr__(self):
        return f"HostIdentity(addr={self.addr:#x})"


class Host:
    def __init__(self, identity: HostIdentity, params: DomainParams, fabric: Fabric,
                 directory: Mapping[int, Certificate], seed: int = 0, *,
                 seal_responses: bool = True, share_proofs: bool = False,
                 phase_budget: Optional[int] = None, cache_batch: int = 8):
        self.identity = identity
        self.params = params
        self.fabric = fabric
        self.directory = dict(directory)
        self.rng = random.Random(f"host/{identity.addr}/{seed}")
        self.seal_responses = seal_responses and identity.seal_secret is not None
        self.share_proofs = share_proofs
        self.phase_budget = phase_budget
        self.cache_batch = cache_batch
        self.inbox = fabric.attach_host(identity.addr)
        self.keys: Dict[bytes, QuorumKey] = {}
        self.public_shares: Dict[Tuple[str, bytes], Dict[int, GroupElement]] = {}
        self.nonce_cache: Dict[Tuple[str, bytes], "OrderedDict[int, NonceCacheEntry]"] = {}
        self.next_j: Dict[Tuple[str, bytes], int] = {}
        self.events: List[Tuple[str, str]] = []
        self._seq = 0

    # transport

    def _budget(self, quorum: QuorumConfig) -> int:
        return self.phase_budget or 4 * quorum.size

    def _envelope(self, dst: int, op: Op, ident: bytes, payload: bytes) -> Envelope:
        self._seq += 1
        env = Envelope(self.identity.addr, dst, self._seq, int(op), ident, payload)
        return env.signed(self.identity.secret)

    def _send(self, quorum: QuorumConfig, op: Op, ident: bytes, payload: bytes,
              unicast: bool = False) -> Dict[int, int]:
        """Send to every member; one broadcast when the quorum is the whole board."""
        if not unicast and quorum.size > 1 and set(quorum.nodes) == set(self.fabric.nodes):
            env = self._envelope(BROADCAST, op, ident, payload)
            self.fabric.route(env.to_bytes())
            return {n: env.seq for n in quorum.nodes}
        expected = {}
        for n in quorum.nodes:
            env = self._envelope(n, op, ident, payload)
            self.fabric.route(env.to_bytes())
            expected[n] = env.seq
        return expected

    def _drain(self, op: Op, expected: Dict[int, int], got: Dict[int, Envelope]) -> None:
        while self.inbox:
            data = self.inbox.pop(0)
            try:
                env = Envelope.from_bytes(data)
                env.status
            except (WireError, ValueError):
                self.events.append(("malformed", data.hex()[:32]))
                continue
            if not env.is_response or env.request_op != op:
                self.events.append(("unexpected", env.describe()))
                continue
            if expected.get(env.src) != env.request_seq or env.src in got:
                self.events.append(("unexpected", env.describe()))
                continue
            cert = self.directory.get(env.src)
            if cert is None or not env.verify(cert.public_key):
                self.events.append(("auth-failure", env.describe()))
                continue
            got[env.src] = env

    def _collect(self, quorum: QuorumConfig, op: Op, expected: Dict[int, int]) -> Dict[int, Envelope]:
        got: Dict[int, Envelope] = {}

        def complete():
            self._drain(op, expected, got)
            return len(got) == len(expected)

        self.fabric.run(self._budget(quorum), until=complete)
        complete()
        return got

    def _require(self, quorum: QuorumConfig, got: Dict[int, Envelope], what: str) -> None:
        errors = {n: e.status for n, e in got.items() if e.status is not Status.OK}
        for status in (Status.COMMITMENT_FAILURE, Status.REPLAY_REJECTED, Status.ACCESS_DENIED,
                       Status.UNKNOWN_KEY, Status.PROTOCOL_ORDER):
            bad = sorted(n for n, s in errors.items() if s is status)
            if bad:
                detail = got[bad[0]].body.decode(errors="replace")
                raise _STATUS_ERRORS[status](f"{what}: nodes {bad} answered {status.name}: {detail}")
        if errors:
            n = min(errors)
            raise ProtocolError(f"{what}: node {n} answered {errors[n].name}")
        missing = sorted(set(quorum.nodes) - set(got))
        if missing:
            raise QuorumTimeout(f"{what}: no valid response from nodes {missing}")

    def _open(self, env: Envelope) -> bytes:
        if not self.seal_responses:
            return env.body
        return open_sealed(self.params, self.identity.seal_secret, env.body)

    # key generation

    def dkpg(self, quorum: QuorumConfig, session_id: Optional[bytes] = None) -> QuorumKey:
        sid = session_id or self.rng.randbytes(ID_LEN)
        expected = self._send(quorum, Op.KEYGEN_INIT, sid, encode_ids(quorum.nodes))
        got = self._collect(quorum, Op.KEYGEN_INIT, expected)
        self._require(quorum, got, "keygen init")
        # let the commitment and reveal rounds play out between the nodes
        self.fabric.run(self._budget(quorum))
        expected = self._send(quorum, Op.KEYGEN_FINALIZE, sid, b"")
        got = self._collect(quorum, Op.KEYGEN_FINALIZE, expected)
        try:
            self._require(quorum, got, "keygen finalize")
        except ProtocolOrderError as exc:
            raise QuorumTimeout(f"key generation did not complete: {exc}") from exc
        w = self.params.element_len
        reports = {}
        for n, env in got.items():
            body = env.body
            Y_agg = self.params.decode_element(body[:w])
            count = body[w]
            shares = {}
            off = w + 1
            for _ in range(count):
                (i,) = struct.unpack_from(">H", body, off)
                shares[i] = self.params.decode_element(body[off + 2:off + 2 + w])
                off += 2 + w
            reports[n] = (Y_agg, shares)
        Y_agg, shares = reports[quorum.nodes[0]]
        for n, (y, s) in reports.items():
            if y != Y_agg or s != shares:
                raise CommitmentFailure(f"node {n} reports a different key; key discarded")
        if set(shares) != set(quorum.nodes):
            raise CommitmentFailure("reported shares do not match the quorum")
        if share_aggr([shares[n] for n in quorum.nodes]) != Y_agg:
            raise CommitmentFailure("aggregate key is not the sum of the public shares")
        key = QuorumKey(sid, Y_agg, shares, quorum.quorum_id, quorum.threshold, quorum.size)
        self.keys[sid] = key
        self.public_shares[(quorum.quorum_id, sid)] = dict(shares)
        return key

    # decryption

    def decrypt(self, quorum: QuorumConfig, key_id: bytes, ct: Ciphertext,
                proofs: Optional[bool] = None) -> GroupElement:
        proofs = self.share_proofs if proofs is None else proofs
        flags = (FLAG_PROOF if proofs else 0) | (FLAG_SEAL if self.seal_responses else 0)
        expected = self._send(quorum, Op.DEC_SHARE, key_id, bytes([flags]) + ct.C1.encode())
        got = self._collect(quorum, Op.DEC_SHARE, expected)
        missing = sorted(set(quorum.nodes) - set(got))
        if missing:
            raise IncompleteQuorum(f"no decryption share from nodes {missing}")
        for n in quorum.nodes:
            if got[n].status is not Status.OK:
                raise IncompleteQuorum(f"node {n} refused to decrypt: {got[n].status.name}")
        w = self.params.element_len
        public = self.public_shares.get((quorum.quorum_id, key_id), {})
        shares = []
        for n in quorum.nodes:
            try:
                body = self._open(got[n])
                A = self.params.decode_element(body[:w])
                proof = DleqProof.from_bytes(self.params, body[w:]) if proofs else None
            except (ValueError, ProtocolError):
                raise ShareProofFailure(n, f"undecodable decryption share from node {n}") from None
            if proofs:
                Y_i = public.get(n)
                if Y_i is None or not dleq_verify(proof, self.params.generator, Y_i, ct.C1, A):
                    raise ShareProofFailure(n)
            shares.append(A)
        return aggr_dec(ct.C2, shares, quorum.size)

    # signing

    def cache(self, quorum: QuorumConfig, key_id: bytes, count: int = 8,
              j_start: Optional[int] = None) -> List[NonceCacheEntry]:
        k = (quorum.quorum_id, key_id)
        j0 = j_start if j_start is not None else self.next_j.get(k, 1)
        expected = self._send(quorum, Op.CACHE_NONCE, key_id, struct.pack(">QH", j0, count))
        got = self._collect(quorum, Op.CACHE_NONCE, expected)
        self._require(quorum, got, "nonce caching")
        w = self.params.element_len
        per_node = {}
        for n in quorum.nodes:
            body = got[n].body
            if len(body) != w * count:
                raise ProtocolError(f"node {n} returned {len(body)} bytes of nonces")
            per_node[n] = [self.params.decode_element(body[i * w:(i + 1) * w]) for i in range(count)]
        store = self.nonce_cache.setdefault(k, OrderedDict())
        entries = []
        for idx in range(count):
            row = {n: per_node[n][idx] for n in quorum.nodes}
            entry = NonceCacheEntry(j0 + idx, share_aggr(list(row.values())), row)
            store[entry.j] = entry
            entries.append(entry)
        self.next_j[k] = max(self.next_j.get(k, 1), j0 + count)
        return entries

    def sign(self, quorum: QuorumConfig, key_id: bytes, m: bytes,
             j: Optional[int] = None) -> AggregateSignature:
        k = (quorum.quorum_id, key_id)
        key = self.keys.get(key_id)
        if key is None:
            raise UnknownKey(f"host has no public key {key_id.hex()}")
        store = self.nonce_cache.setdefault(k, OrderedDict())
        if j is None:
            if not store:
                self.cache(quorum, key_id, self.cache_batch)
            j, entry = store.popitem(last=False)
        elif j in store:
            entry = store.pop(j)
        else:
            entry = self.cache(quorum, key_id, 1, j_start=j)[0]
            store.pop(j, None)
        Hm = message_digest(m)
        payload = Hm + struct.pack(">Q", j) + entry.R.encode()
        expected = self._send(quorum, Op.SIGN, key_id, payload)
        got = self._collect(quorum, Op.SIGN, expected)
        try:
            self._require(quorum, got, f"signing j={j}")
        except ReplayRejected as exc:
            raise SigningFailed(j, f"replay-rejected: {exc}") from exc
        except (IncompleteQuorum, ProtocolError, AccessDenied, UnknownKey) as exc:
            raise SigningFailed(j, f"{type(exc).__name__}: {exc}") from exc
        shares = []
        for n in quorum.nodes:
            body = got[n].body
            if len(body) != 2 * SCALAR_LEN + 8:
                raise SigningFailed(j, f"malformed share from node {n}")
            sigma = self.params.decode_scalar(body[:SCALAR_LEN])
            eps = self.params.decode_scalar(body[SCALAR_LEN:2 * SCALAR_LEN])
            (jj,) = struct.unpack_from(">Q", body, 2 * SCALAR_LEN)
            shares.append(SignatureShare(n, jj, sigma, eps))
        try:
            sig = aggregate(shares, quorum.nodes)
        except InconsistentShare as exc:
            raise SigningFailed(j, f"inconsistent-share: {exc}") from exc
        if sig.j != j or not verify(key.Y_agg, m, j, sig):
            raise SigningFailed(j, "verification-failed: combined signature does not verify")
        return sig

    # randomness

    def gen_random(self, quorum: QuorumConfig, out_len: int = 64) -> bytes:
        flags = FLAG_SEAL if self.seal_responses else 0
        expected = self._send(quorum, Op.RNG, bytes(ID_LEN), bytes([flags]) + encode_ids(quorum.nodes))
        got = self._collect(quorum, Op.RNG, expected)
        missing = sorted(set(quorum.nodes) - {n for n, e in got.items() if e.status is Status.OK})
        if missing:
            raise IncompleteQuorum(f"no randomness share from nodes {missing}")
        return drng_combine([self._open(got[n]) for n in quorum.nodes], out_len)

    # key propagation

    def propagate(self, source: QuorumConfig, target: QuorumConfig, key_id: bytes) -> bool:
        key = self.keys.get(key_id)
        if key is None:
            raise UnknownKey(f"host has no public key {key_id.hex()}")
        if set(source.nodes) & set(target.nodes):
            raise SetupError("source and target quorums must be disjoint")
        prep = key.Y_agg.encode() + encode_ids(source.nodes)
        expected = self._send(target, Op.KEYPROP_PREPARE, key_id, prep, unicast=True)
        self._require(target, self._collect(target, Op.KEYPROP_PREPARE, expected), "propagation prepare")
        expected = self._send(source, Op.KEYPROP_SPLIT, key_id, encode_ids(target.nodes), unicast=True)
        self._require(source, self._collect(source, Op.KEYPROP_SPLIT, expected), "propagation split")
        self.fabric.run(self._budget(target) + self._budget(source))
        expected = self._send(target, Op.KEYPROP_FINALIZE, key_id, b"", unicast=True)
        got = self._collect(target, Op.KEYPROP_FINALIZE, expected)
        try:
            self._require(target, got, "propagation finalize")
        except ProtocolOrderError as exc:
            raise IncompleteQuorum(f"propagation did not complete: {exc}") from exc
        shares = {n: self.params.decode_element(got[n].body) for n in target.nodes}
        if share_aggr(list(shares.values())) != key.Y_agg:
            raise CommitmentFailure("propagated shares do not add up to the public key")
        self.public_shares[(target.quorum_id, key_id)] = shares
        return True
