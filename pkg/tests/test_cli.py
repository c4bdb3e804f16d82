import json

import pytest

from quorumhsm.cli import main


def run(capsys, tmp_path, *args):
    code = main(["--out", str(tmp_path), *args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_bundled(capsys, tmp_path):
    code, out, _ = run(capsys, tmp_path, "run", "honest-decrypt")
    assert code == 0 and "honest-decrypt: success" in out
    summary = json.loads((tmp_path / "honest-decrypt" / "summary.json").read_text())
    assert summary["outcome"] == "success"


def test_run_abort_exit_code(capsys, tmp_path):
    code, out, _ = run(capsys, tmp_path, "run", "rogue-key")
    assert code == 3 and "abort(commitment-failure)" in out


def test_run_twice_identical(capsys, tmp_path):
    run(capsys, tmp_path / "a", "run", "replay-index")
    run(capsys, tmp_path / "b", "run", "replay-index")
    a = (tmp_path / "a" / "replay-index" / "summary.json").read_text()
    b = (tmp_path / "b" / "replay-index" / "summary.json").read_text()
    assert a == b


def test_run_bad_file_is_usage_error(capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\nquorums: 7\nscript: []\n")
    code, _, err = run(capsys, tmp_path, "run", str(bad))
    assert code == 2 and "line 2" in err and "quorums" in err


def test_keygen_encrypt_decrypt_sign_verify(capsys, tmp_path):
    code, out, _ = run(capsys, tmp_path, "keygen", "--quorums", "3,2")
    assert code == 0 and out.startswith("key ")
    key_prefix = out.split()[1][:8]
    code, ct, _ = run(capsys, tmp_path, "encrypt", "--message", "attack at dawn")
    assert code == 0
    code, out, _ = run(capsys, tmp_path, "decrypt", ct.strip(), "--proofs")
    assert code == 0 and out.strip() == "attack at dawn"
    code, sig, _ = run(capsys, tmp_path, "sign", "--message", "hi", "--key", key_prefix)
    assert code == 0
    code, out, _ = run(capsys, tmp_path, "verify", "--message", "hi", "--signature", sig.strip())
    assert code == 0 and out.strip() == "valid"
    code, out, _ = run(capsys, tmp_path, "verify", "--message", "ho", "--signature", sig.strip())
    assert code == 1 and out.strip() == "invalid"
    code, out, _ = run(capsys, tmp_path, "propagate", "--from", "q1", "--to", "q2")
    assert code == 0
    code, out, _ = run(capsys, tmp_path, "decrypt", ct.strip(), "--quorum", "q2")
    assert code == 0 and out.strip() == "attack at dawn"
    code, out, _ = run(capsys, tmp_path, "rng", "--length", "16")
    assert code == 0 and len(bytes.fromhex(out.strip())) == 16


def test_transparent_backend_integers(capsys, tmp_path):
    code, _, _ = run(capsys, tmp_path, "--backend", "transparent", "--n", "257", "keygen", "--quorums", "2")
    assert code == 0
    code, ct, _ = run(capsys, tmp_path, "encrypt", "--int", "42")
    code, out, _ = run(capsys, tmp_path, "decrypt", ct.strip())
    assert code == 0 and int(out.strip(), 16) == 42


def test_commands_need_state(capsys, tmp_path):
    code, _, err = run(capsys, tmp_path, "sign", "--message", "x")
    assert code == 1 and "keygen" in err


def test_tolerance(capsys, tmp_path):
    code, out, _ = run(capsys, tmp_path, "tolerance", "--p", "0.1", "--k", "3", "--t", "1-3")
    assert code == 0 and "0.999" in out


def test_bench_small(capsys, tmp_path):
    code, out, _ = run(capsys, tmp_path, "bench", "--sizes", "1-4", "--counts", "1-3", "--requests", "60")
    assert code == 0 and "[FAIL]" not in out
    assert (tmp_path / "bench.json").exists()


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
