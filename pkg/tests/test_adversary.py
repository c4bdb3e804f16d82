from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quorumhsm.adversary import (
    BEHAVIOURS,
    CraftingNode,
    behaviour_of,
    bias_achieved,
    find_leaks,
    make_node,
    node_secrets,
    posterior,
)
from quorumhsm.board import Board
from quorumhsm.errors import CommitmentFailure, QuorumTimeout, SigningFailed
from quorumhsm.fabric import AdversarySpec
from quorumhsm.group import p256, transparent
from quorumhsm.threshold import commit_verify, commitment
from quorumhsm.wire import Op, Status, peek_header

P = transparent(257)
# a lucky guess of the aggregate key has probability 1/n, so crafting runs use a large order
BIG = transparent(4294967291)


def secret_of(board, kid, nodes):
    return sum(board.nodes[n].state.key_slots[kid].x.value for n in nodes) % board.params.n


def test_behaviour_registry():
    for name in BEHAVIOURS:
        assert behaviour_of(make_node(1, name)) == name
    assert behaviour_of(make_node(1)) == "honest"
    with pytest.raises(ValueError):
        make_node(1, "evil")


def test_withholding_node_never_sees_reveals():
    b = Board.build(P, (3,), adversary=AdversarySpec({3: "withhold"}))
    with pytest.raises(QuorumTimeout):
        b.host.dkpg(b.quorum())
    bad = b.nodes[3]
    sids = {e.ident for e in bad.responses}
    assert sids
    for sid in sids:
        assert bad.observed_reveals(sid) == []
    answers = [e for e in bad.responses if e.request_op == Op.KEYGEN_GET_PUBKEY]
    assert answers and all(e.status is Status.PROTOCOL_ORDER for e in answers)
    # honest nodes never left the commitment phase, so nothing was revealed
    assert not any(peek_header(r.envelope)[3] == Op.KEYGEN_STORE_PUBKEY for r in b.transcript)


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.integers(2, 5))
def test_crafted_reveal_fails_commitment(seed, t):
    b = Board.build(BIG, (t,), seed=seed, adversary=AdversarySpec({t: "craft"}))
    with pytest.raises(CommitmentFailure):
        b.host.dkpg(b.quorum())
    node = b.nodes[t]
    assert isinstance(node, CraftingNode) and node.crafted
    for sid, Y_adv in node.crafted.items():
        committed = b.nodes[1].state.sessions[sid].hashes[t]
        assert committed == commitment(node.state.sessions[sid].triplet.Y)
        assert Y_adv != node.state.sessions[sid].triplet.Y
        assert not commit_verify([Y_adv], [committed])
        honest = [b.nodes[i] for i in range(1, t)]
        assert not bias_achieved(honest, node.target_key(), sid)


def test_bad_commit_aborts():
    b = Board.build(P, (3,), adversary=AdversarySpec({1: "bad-commit"}))
    with pytest.raises(CommitmentFailure):
        b.host.dkpg(b.quorum())
    assert not b.nodes[2].state.key_slots and not b.nodes[3].state.key_slots


@pytest.mark.parametrize("t", [1, 2, 3, 4])
def test_posterior_uniform_below_threshold(t):
    malicious = {n: "passive" for n in range(1, t)}
    b = Board.build(P, (t,), seed=t, adversary=AdversarySpec(malicious, collusion_channel=True))
    key = b.host.dkpg(b.quorum())
    for i in range(3):
        b.host.sign(b.quorum(), key.key_id, bytes([i]))
    know = b.knowledge(key.key_id)
    assert not know.violated
    assert posterior(know) == [Fraction(1, 257)] * 257


@pytest.mark.parametrize("t", [1, 2, 3, 4])
def test_full_quorum_recovers_secret(t):
    malicious = {n: "passive" for n in range(1, t + 1)}
    b = Board.build(P, (t,), seed=t, adversary=AdversarySpec(malicious))
    key = b.host.dkpg(b.quorum())
    know = b.knowledge(key.key_id)
    x = secret_of(b, key.key_id, range(1, t + 1))
    assert know.violated and know.secret().value == x
    post = posterior(know)
    assert post[x] == 1 and sum(post) == 1


def test_index_reuse_would_leak_the_share():
    b = Board.build(P, (2,), adversary=AdversarySpec({1: "passive"}))
    q = b.quorum()
    key = b.host.dkpg(q)
    sig = b.host.sign(q, key.key_id, b"first")
    with pytest.raises(SigningFailed):
        b.host.sign(q, key.key_id, b"second", j=sig.j)
    assert not b.knowledge(key.key_id).violated

    # the same attack against a node whose guard is missing recovers x_2
    b = Board.build(P, (2,), adversary=AdversarySpec({1: "passive"}))
    b.nodes[2]._consume = lambda slot, j: None
    key = b.host.dkpg(q)
    sig = b.host.sign(q, key.key_id, b"first")
    with pytest.raises(SigningFailed):
        b.host.sign(q, key.key_id, b"second", j=sig.j)  # node 1 still refuses
    know = b.knowledge(key.key_id)
    assert know.recovered[2] == b.nodes[2].state.key_slots[key.key_id].x
    assert know.secret().value == secret_of(b, key.key_id, (1, 2))


def test_propagation_to_malicious_recipient_is_partial():
    b = Board.build(P, (2, 2), adversary=AdversarySpec({3: "passive"}))
    key = b.host.dkpg(b.quorum("q1"))
    b.host.propagate(b.quorum("q1"), b.quorum("q2"), key.key_id)
    for qid in ("q1", "q2"):
        know = b.knowledge(key.key_id, b.quorum(qid))
        assert not know.violated
        assert posterior(know) == [Fraction(1, 257)] * 257


def test_propagation_to_all_malicious_recipients_reveals_source():
    b = Board.build(P, (2, 2), adversary=AdversarySpec({3: "passive", 4: "passive"}))
    key = b.host.dkpg(b.quorum("q1"))
    b.host.propagate(b.quorum("q1"), b.quorum("q2"), key.key_id)
    # the whole target quorum is corrupt, so the key is lost through either quorum
    know = b.knowledge(key.key_id, b.quorum("q1"))
    assert know.violated and know.secret().value == secret_of(b, key.key_id, (1, 2))


def test_no_secret_bytes_on_the_bus():
    b = Board.build(p256(), (3, 2), seed=8)
    q1, q2 = b.quorum("q1"), b.quorum("q2")
    key = b.host.dkpg(q1)
    b.host.sign(q1, key.key_id, b"m")
    b.host.gen_random(q1, 32)
    b.host.propagate(q1, q2, key.key_id)
    b.host.sign(q2, key.key_id, b"m2")
    secrets = {}
    for node in b.nodes.values():
        secrets.update(node_secrets(node))
    secrets["host"] = b.host.identity.secret.to_bytes()
    assert len(secrets) > 10
    assert find_leaks(b.transcript, secrets) == []
