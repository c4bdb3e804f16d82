from quorumhsm.bench import DEFAULT_COSTS, LatencyModel, latency_sweep, run_bench, throughput_sweep
from quorumhsm.board import Board
from quorumhsm.group import transparent


def test_decrypt_latency_is_one_node_op():
    rows = latency_sweep([1, 4], reps=2)
    for r in rows:
        assert r.decrypt_ms == DEFAULT_COSTS["DEC_SHARE"]
        assert r.sign_ms == DEFAULT_COSTS["SIGN"]
        assert r.decrypt_rounds == 1


def test_keygen_exchange_counts_and_growth():
    rows = latency_sweep(range(1, 7), reps=1)
    assert [r.store_hash_msgs for r in rows] == [t * (t - 1) for t in range(1, 7)]
    assert [r.store_pubkey_msgs for r in rows] == [t * (t - 1) for t in range(1, 7)]
    keygen = [r.keygen_ms for r in rows]
    assert all(a < b for a, b in zip(keygen, keygen[1:]))


def test_costs_override_changes_model():
    rows = latency_sweep([2], costs={"DEC_SHARE": 10.0}, reps=1)
    assert rows[0].decrypt_ms == 10.0


def test_throughput_scales_with_quorums():
    rows = throughput_sweep([1, 2, 4], requests=24)
    per = [r.ops_per_s / r.quorums for r in rows]
    assert max(per) - min(per) < 1e-9
    assert rows[0].ops_per_s == 1000.0 / DEFAULT_COSTS["DEC_SHARE"]


def test_sign_throughput():
    rows = throughput_sweep([1, 2], requests=8, op="sign")
    assert rows[1].ops_per_s == 2 * rows[0].ops_per_s


def test_busy_node_serialises_work():
    b = Board.build(transparent(257), (2,), seal_responses=False)
    model = LatencyModel(b.fabric)
    key = b.host.dkpg(b.quorum())
    model.reset()
    model.issue_at = 0.0
    b.host.gen_random(b.quorum(), 8)
    b.host.gen_random(b.quorum(), 8)
    assert model.makespan == 2 * DEFAULT_COSTS["RNG"]
    assert key.Y_agg is not None


def test_report_shapes_hold():
    # 840 requests split evenly over every quorum count from 1 to 8
    report = run_bench(range(1, 11), range(1, 9), requests=840)
    checks = report.shape_checks()
    assert len(checks) == 5 and all(checks.values())
    text = report.table()
    assert "STORE_HASH" in text and "linear fit" in text
    d = report.to_dict()
    assert d["checks"] == checks and len(d["latency"]) == 10 and len(d["throughput"]) == 8
