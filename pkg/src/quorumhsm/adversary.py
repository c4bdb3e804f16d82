"""Malicious IC behaviours and the adversary's knowledge oracle.

Every behaviour is a small :class:`ICNode` subclass overriding one hook.  A
node listed as malicious in a board's AdversarySpec also leaks its whole
state to the adversary, so even ``passive`` nodes count against secrecy.

The knowledge oracle treats group elements as opaque (no discrete logs) and
collects every linear relation on the honest shares that the adversary can
actually derive: shares held by malicious nodes, two signature shares for the
same index ``j`` under different challenges, and sealed propagation shares
addressed to malicious recipients.  On the transparent backend the resulting
posterior over the secret is computed by exhaustive enumeration.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .elgamal import open_sealed
from .errors import ProtocolError
from .fabric import Transcript
from .group import SCALAR_LEN, Backend, DomainParams, GroupElement, Scalar, base_mul, scalar_rand
from .node import DkgSession, ICNode, KeySlot
from .threshold import commitment, share_aggr
from .wire import RESPONSE_BIT, Envelope, Op, Status


class PassiveNode(ICNode):
    """Follows the protocol; its state is simply visible to the adversary."""


class WithholdingNode(ICNode):
    """Skips its own commitment and asks peers for their public shares instead.

    It hopes to see the honest reveals before choosing its share.  The honest
    phase machine answers every request with ``PROTOCOL_ORDER``.
    """

    def _send_commitments(self, sess: DkgSession) -> None:
        del sess.hashes[self.node_id]
        for peer in sess.members:
            if peer != self.node_id:
                self._emit(peer, Op.KEYGEN_GET_PUBKEY, sess.session_id, b"")

    def observed_reveals(self, session_id: bytes) -> List[GroupElement]:
        """Honest public shares that reached this node, by any route."""
        seen = []
        for env in self.responses:
            if (env.ident == session_id and env.request_op == Op.KEYGEN_GET_PUBKEY
                    and env.status is Status.OK):
                seen.append(self.state.params.decode_element(env.body))
        sess = self.state.sessions.get(session_id)
        if sess is not None:
            seen += [Y for m, Y in sess.pubkeys.items() if m != self.node_id]
        return seen


class CraftingNode(ICNode):
    """Commits honestly, then reveals ``Y_target - sum(honest Y)``.

    If the honest nodes accepted this reveal the aggregate key would be
    ``Y_target``, whose discrete log the adversary chose.
    """

    def __init__(self, node_id: int, seed: int = 0, vendor: str = ""):
        super().__init__(node_id, seed, vendor)
        self.target_secret: Optional[Scalar] = None
        self.crafted: Dict[bytes, GroupElement] = {}
        self._deferred: set = set()

    def target_key(self) -> GroupElement:
        params = self.state.params
        if self.target_secret is None:
            self.target_secret = scalar_rand(params, self.rng)
        return base_mul(self.target_secret, params)

    def _reveal(self, sess: DkgSession) -> None:
        self._deferred.add(sess.session_id)

    def _on_pubkey(self, sess: DkgSession, src: int) -> None:
        others = [m for m in sess.members if m != self.node_id]
        if sess.session_id not in self._deferred or not all(m in sess.pubkeys for m in others):
            return
        self._deferred.discard(sess.session_id)
        Y_adv = self.target_key() - share_aggr([sess.pubkeys[m] for m in others])
        sess.pubkeys[self.node_id] = Y_adv
        self.crafted[sess.session_id] = Y_adv
        for peer in others:
            self._emit(peer, Op.KEYGEN_STORE_PUBKEY, sess.session_id, Y_adv.encode())


class BadCommitNode(ICNode):
    """Sends a commitment that does not match the share it later reveals."""

    def _send_commitments(self, sess: DkgSession) -> None:
        bogus = commitment(sess.triplet.Y + self.state.params.generator)
        for peer in sess.members:
            if peer != self.node_id:
                self._emit(peer, Op.KEYGEN_STORE_HASH, sess.session_id, bogus)


class BadRevealNode(ICNode):
    """Commits to its share but reveals a different one."""

    def _reveal(self, sess: DkgSession) -> None:
        wrong = sess.triplet.Y + self.state.params.generator
        for peer in sess.members:
            if peer != self.node_id:
                self._emit(peer, Op.KEYGEN_STORE_PUBKEY, sess.session_id, wrong.encode())


class TamperShareNode(ICNode):
    """Returns ``A_i + G`` as its decryption share (with an honest-looking proof attempt)."""

    def _decryption_share(self, slot: KeySlot, C1: GroupElement) -> GroupElement:
        return (-slot.x) * C1 + self.state.params.generator


class SilentNode(ICNode):
    """Accepts everything and answers nothing."""

    def handle(self, env: Envelope) -> List[Envelope]:
        super().handle(env)
        return []


class NoReplayGuardNode(ICNode):
    """Signs under any ``j`` as often as asked.  Only for demonstrating the leak."""

    def _consume(self, slot: KeySlot, j: int) -> None:
        return None


BEHAVIOURS = {
    "passive": PassiveNode,
    "withhold": WithholdingNode,
    "craft": CraftingNode,
    "bad-commit": BadCommitNode,
    "bad-reveal": BadRevealNode,
    "tamper-share": TamperShareNode,
    "silent": SilentNode,
    "no-replay-guard": NoReplayGuardNode,
}


def make_node(node_id: int, behaviour: Optional[str] = None, seed: int = 0, vendor: str = "") -> ICNode:
    if behaviour is None or behaviour == "honest":
        return ICNode(node_id, seed, vendor)
    try:
        cls = BEHAVIOURS[behaviour]
    except KeyError:
        raise ValueError(f"unknown behaviour {behaviour!r}; choose from {sorted(BEHAVIOURS)}") from None
    return cls(node_id, seed, vendor)


def behaviour_of(node: ICNode) -> str:
    for name, cls in BEHAVIOURS.items():
        if type(node) is cls:
            return name
    return "honest"


# knowledge oracle


@dataclass
class Knowledge:
    """What the adversary provably knows about the shares of one key."""

    params: DomainParams
    key_id: bytes
    quorum: Tuple[int, ...]
    known: Dict[int, Scalar] = field(default_factory=dict)
    recovered: Dict[int, Scalar] = field(default_factory=dict)

    @property
    def unknown(self) -> List[int]:
        return [i for i in self.quorum if i not in self.known and i not in self.recovered]

    def secret(self) -> Optional[Scalar]:
        if self.unknown:
            return None
        return share_aggr([self.known[i] if i in self.known else self.recovered[i] for i in self.quorum])

    @property
    def violated(self) -> bool:
        return not self.unknown


def _signature_relations(params: DomainParams, transcript: Transcript, key_id: bytes,
                         honest: Iterable[int]) -> Dict[int, Scalar]:
    honest = set(honest)
    pairs: Dict[Tuple[int, int], Dict[int, int]] = {}
    want = Op.SIGN | RESPONSE_BIT
    for env in transcript.envelopes("route"):
        if env.opcode != want or env.ident != key_id or env.src not in honest:
            continue
        if env.status is not Status.OK or len(env.body) != 2 * SCALAR_LEN + 8:
            continue
        sigma = int.from_bytes(env.body[:SCALAR_LEN], "big") % params.n
        eps = int.from_bytes(env.body[SCALAR_LEN:2 * SCALAR_LEN], "big") % params.n
        (j,) = struct.unpack_from(">Q", env.body, 2 * SCALAR_LEN)
        pairs.setdefault((env.src, j), {})[eps] = sigma
    out = {}
    for (node, _), by_eps in pairs.items():
        if len(by_eps) < 2:
            continue
        (e1, s1), (e2, s2) = list(by_eps.items())[:2]
        # sigma = r - x * eps with the same r, so x = (s1 - s2) / (e2 - e1)
        x = params.scalar(s1 - s2) * params.scalar(e2 - e1).inverse()
        out[node] = x
    return out


def _propagation_relations(params: DomainParams, transcript: Transcript, key_id: bytes,
                           honest: Iterable[int], keys: Mapping[int, Scalar]) -> Dict[int, Scalar]:
    honest = set(honest)
    targets: Dict[int, set] = {}
    opened: Dict[int, Dict[int, Scalar]] = {}
    for env in transcript.envelopes("route"):
        if env.opcode != Op.KEYPROP_SHARE or env.ident != key_id or env.src not in honest:
            continue
        targets.setdefault(env.src, set()).add(env.dst)
        sk = keys.get(env.dst)
        if sk is None:
            continue
        try:
            raw = open_sealed(params, sk, env.payload)
            opened.setdefault(env.src, {})[env.dst] = params.decode_scalar(raw)
        except (ValueError, ProtocolError):
            continue
    out = {}
    for src, dsts in targets.items():
        got = opened.get(src, {})
        if dsts and set(got) >= dsts:
            out[src] = share_aggr([got[d] for d in sorted(dsts)])
    return out


def adversary_knowledge(params: DomainParams, transcript: Transcript,
                        malicious: Mapping[int, ICNode], key_id: bytes,
                        quorum: Sequence[int]) -> Knowledge:
    """Collect the adversary's knowledge of ``key_id`` shared over ``quorum``."""
    k = Knowledge(params, key_id, tuple(quorum))
    id_keys = {}
    for n, node in malicious.items():
        if node.state is None:
            continue
        id_keys[n] = node.state.identity.secret
        slot = node.state.key_slots.get(key_id)
        if slot is not None and n in k.quorum:
            k.known[n] = slot.x
    honest = [i for i in k.quorum if i not in k.known]
    k.recovered.update(_signature_relations(params, transcript, key_id, honest))
    for n, x in _propagation_relations(params, transcript, key_id, honest, id_keys).items():
        k.recovered.setdefault(n, x)
    return k


def posterior(k: Knowledge) -> List[Fraction]:
    """Exact posterior over the secret, given the knowledge (transparent backend only)."""
    params = k.params
    if params.backend is not Backend.TRANSPARENT:
        raise ValueError("posterior enumeration needs the transparent backend")
    n = params.n
    dist = [0] * n
    dist[0] = 1
    for i in k.quorum:
        fixed = k.known[i] if i in k.known else k.recovered.get(i)
        allowed = [fixed.value] if fixed is not None else range(n)
        nxt = [0] * n
        for acc, w in enumerate(dist):
            if w:
                for v in allowed:
                    nxt[(acc + v) % n] += w
        dist = nxt
    total = sum(dist)
    return [Fraction(w, total) for w in dist]


def find_leaks(transcript: Transcript, secrets: Mapping[str, bytes]) -> List[Tuple[int, str]]:
    """Transcript records containing any of the given secret byte strings verbatim.

    Only meaningful for high-entropy secrets (curve backend): a 32-byte encoding
    of a residue mod 13 is mostly zeros and can occur by chance.
    """
    hits = []
    for idx, rec in enumerate(transcript.records):
        for name, blob in secrets.items():
            if blob and blob in rec.envelope:
                hits.append((idx, name))
    return hits


def node_secrets(node: ICNode) -> Dict[str, bytes]:
    """Byte encodings of everything a node must never put on the bus."""
    st = node.state
    out = {f"ic{node.node_id}/identity": st.identity.secret.to_bytes()}
    for kid, slot in st.key_slots.items():
        out[f"ic{node.node_id}/{kid.hex()[:8]}/x"] = slot.x.to_bytes()
        out[f"ic{node.node_id}/{kid.hex()[:8]}/s"] = slot.s
    for sid, sess in st.sessions.items():
        if sess.triplet is not None:
            out[f"ic{node.node_id}/{sid.hex()[:8]}/triplet"] = sess.triplet.x.to_bytes()
    return out


def bias_achieved(nodes: Iterable[ICNode], crafted: GroupElement, key_id: bytes) -> bool:
    """Did any honest node adopt the adversary-chosen aggregate key?"""
    for node in nodes:
        if node.state is None:
            continue
        slot = node.state.key_slots.get(key_id)
        if slot is not None and slot.Y_agg == crafted:
            return True
    return False

