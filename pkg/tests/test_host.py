import random

import pytest

from quorumhsm.board import Board
from quorumhsm.elgamal import encrypt
from quorumhsm.errors import (
    CommitmentFailure,
    IncompleteQuorum,
    SetupError,
    ShareProofFailure,
    SigningFailed,
    UnknownKey,
)
from quorumhsm.fabric import AdversarySpec, Rule
from quorumhsm.group import Scalar, base_mul, p256, transparent
from quorumhsm.host import QuorumConfig
from quorumhsm.multisig import verify
from quorumhsm.threshold import drng_combine, triplet_gen
from quorumhsm.wire import Envelope


def force_shares(board, values):
    """Make the next keygen on each node draw the given secret share."""
    params = board.params
    for n, v in zip(sorted(board.nodes), values):
        node = board.nodes[n]
        x = Scalar(params, v)
        node._make_triplet = lambda sess, x=x, node=node: triplet_gen(params, node.rng, x=x)


def test_quorum_config_checks():
    with pytest.raises(SetupError):
        QuorumConfig("q", (1, 1, 2))
    with pytest.raises(SetupError):
        QuorumConfig("q", (1, 2, 3), threshold=2)
    assert QuorumConfig("q", (4, 5)).threshold == 2


def test_dkpg_forced_shares_sum_mod_n(z13):
    b = Board.build(z13, (3,))
    force_shares(b, [3, 5, 7])
    key = b.host.dkpg(b.quorum())
    assert key.Y_agg == base_mul(2, z13)
    assert {i: y for i, y in key.shares.items()} == {1: base_mul(3, z13), 2: base_mul(5, z13),
                                                     3: base_mul(7, z13)}
    for node in b.nodes.values():
        assert node.state.key_slots[key.key_id].Y_agg == key.Y_agg


def test_dkpg_single_node(z13):
    b = Board.build(z13, (1,))
    key = b.host.dkpg(b.quorum())
    assert key.Y_agg == key.shares[1]
    assert key.Y_agg == base_mul(b.nodes[1].state.key_slots[key.key_id].x, z13)


@pytest.mark.parametrize("t", range(1, 11))
def test_dkpg_matches_direct_arithmetic(t):
    params = transparent(257)
    b = Board.build(params, (t,), seed=t)
    key = b.host.dkpg(b.quorum())
    x = sum(b.nodes[n].state.key_slots[key.key_id].x.value for n in b.nodes) % 257
    assert key.Y_agg == base_mul(x, params)


def test_dkpg_swapped_reveal_aborts(z13):
    b = Board.build(z13, (3,), adversary=AdversarySpec({2: "bad-reveal"}))
    with pytest.raises(CommitmentFailure):
        b.host.dkpg(b.quorum())


def test_decrypt_full_trace(z13):
    b = Board.build(z13, (3,))
    force_shares(b, [3, 5, 7])
    key = b.host.dkpg(b.quorum())
    m = base_mul(4, z13)
    ct = encrypt(z13, m, key.Y_agg, random.Random(0), r=Scalar(z13, 5))
    assert ct.C1 == base_mul(5, z13) and ct.C2 == base_mul(1, z13)
    assert b.host.decrypt(b.quorum(), key.key_id, ct) == m
    assert b.host.decrypt(b.quorum(), key.key_id, ct, proofs=True) == m


def test_decrypt_single_node_is_plain_elgamal(curve):
    b = Board.build(curve, (1,))
    key = b.host.dkpg(b.quorum())
    x = b.nodes[1].state.key_slots[key.key_id].x
    m = base_mul(99, curve)
    ct = encrypt(curve, m, key.Y_agg, random.Random(1))
    assert ct.C2 - x * ct.C1 == m
    assert b.host.decrypt(b.quorum(), key.key_id, ct) == m


def test_tampered_share_names_the_node(z13):
    b = Board.build(z13, (3,), adversary=AdversarySpec({2: "tamper-share"}))
    key = b.host.dkpg(b.quorum())
    ct = encrypt(z13, base_mul(4, z13), key.Y_agg, random.Random(2))
    with pytest.raises(ShareProofFailure) as exc:
        b.host.decrypt(b.quorum(), key.key_id, ct, proofs=True)
    assert exc.value.node_id == 2
    # without proofs the host cannot tell and combines a wrong plaintext
    assert b.host.decrypt(b.quorum(), key.key_id, ct) != base_mul(4, z13)


def test_silent_node_gives_incomplete_quorum(z13):
    drop = Rule("drop", src=3, opcode="DEC_SHARE", response=True)
    b = Board.build(z13, (3,), adversary=AdversarySpec(controller_actions=[drop]))
    key = b.host.dkpg(b.quorum())
    ct = encrypt(z13, base_mul(4, z13), key.Y_agg, random.Random(3))
    with pytest.raises(IncompleteQuorum, match=r"\[3\]"):
        b.host.decrypt(b.quorum(), key.key_id, ct)


@pytest.mark.parametrize("t", [1, 2, 5, 10])
def test_sign_and_verify(curve, t):
    b = Board.build(curve, (t,))
    key = b.host.dkpg(b.quorum())
    sig = b.host.sign(b.quorum(), key.key_id, b"hello")
    assert verify(key.Y_agg, b"hello", sig.j, sig)
    assert not verify(key.Y_agg, b"hellp", sig.j, sig)
    assert not verify(key.Y_agg + curve.generator, b"hello", sig.j, sig)


def test_sign_consumes_cached_indices_in_order():
    b = Board.build(transparent(257), (3,))
    key = b.host.dkpg(b.quorum())
    b.host.cache(b.quorum(), key.key_id, 4)
    js = [b.host.sign(b.quorum(), key.key_id, bytes([i])).j for i in range(5)]
    assert js == [1, 2, 3, 4, 5]


def test_reused_index_fails():
    params = transparent(257)
    b = Board.build(params, (3,))
    key = b.host.dkpg(b.quorum())
    sig = b.host.sign(b.quorum(), key.key_id, b"one")
    with pytest.raises(SigningFailed) as exc:
        b.host.sign(b.quorum(), key.key_id, b"two", j=sig.j)
    assert exc.value.j == sig.j
    assert "replay-rejected" in str(exc.value)
    # the host moves on to a fresh index
    assert b.host.sign(b.quorum(), key.key_id, b"two").j != sig.j


def test_unknown_key(z13):
    b = Board.build(z13, (2,))
    with pytest.raises(UnknownKey):
        b.host.sign(b.quorum(), b"k" * 16, b"m")


def test_gen_random_combines_node_shares(z13):
    b = Board.build(z13, (3,))
    out = b.host.gen_random(b.quorum(), 48)
    assert len(out) == 48
    assert out != b.host.gen_random(b.quorum(), 48)


def test_gen_random_unsealed_matches_combiner(z13):
    b = Board.build(z13, (2,), seal_responses=False)
    seen = []
    b.fabric.observers.append(lambda slot, target, data, outbound: seen.extend(outbound))
    out = b.host.gen_random(b.quorum(), 32)
    bodies = {Envelope.from_bytes(d).src: Envelope.from_bytes(d).body for d in seen}
    assert out == drng_combine([bodies[1], bodies[2]], 32)


@pytest.mark.parametrize("sizes", [(3, 2), (1, 1), (2, 4)])
def test_propagate_preserves_decrypt_and_sign(params, sizes):
    b = Board.build(params, sizes)
    q1, q2 = b.quorum("q1"), b.quorum("q2")
    key = b.host.dkpg(q1)
    rng = random.Random(5)
    m = base_mul(rng.randrange(1, params.n), params)
    ct = encrypt(params, m, key.Y_agg, rng)
    assert b.host.propagate(q1, q2, key.key_id)
    assert b.host.decrypt(q2, key.key_id, ct, proofs=True) == m
    assert b.host.decrypt(q1, key.key_id, ct) == m
    sig = b.host.sign(q2, key.key_id, b"after")
    assert verify(key.Y_agg, b"after", sig.j, sig)
    old = sum((b.nodes[n].state.key_slots[key.key_id].x for n in q1.nodes), Scalar(params, 0))
    new = sum((b.nodes[n].state.key_slots[key.key_id].x for n in q2.nodes), Scalar(params, 0))
    assert old == new


def test_propagate_needs_disjoint_quorums(z13):
    b = Board(z13, [QuorumConfig("a", (1, 2)), QuorumConfig("b", (2, 3))])
    key = b.host.dkpg(b.quorum("a"))
    with pytest.raises(SetupError):
        b.host.propagate(b.quorum("a"), b.quorum("b"), key.key_id)


def test_board_state_round_trip(tmp_path):
    params = p256()
    b = Board.build(params, (2, 2), seed=4)
    key = b.host.dkpg(b.quorum("q1"))
    b.host.cache(b.quorum("q1"), key.key_id, 2)
    b.save(tmp_path / "s.json")
    c = Board.load(tmp_path / "s.json")
    rng = random.Random(9)
    m = base_mul(12345, params)
    ct = encrypt(params, m, key.Y_agg, rng)
    assert c.host.decrypt(c.quorum("q1"), key.key_id, ct) == m
    sig = c.host.sign(c.quorum("q1"), key.key_id, b"persisted")
    assert verify(key.Y_agg, b"persisted", sig.j, sig)
