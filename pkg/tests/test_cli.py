import json

import pytest

from movsc import cli
from movsc.datastore import DataStore


def run(capsys, fn, *argv):
    code = fn(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    return code, (json.loads(out[-1]) if out and out[-1].startswith("{") else out)


@pytest.fixture
def env(tmp_path, monkeypatch):
    monkeypatch.setenv("MOVSC_CHAIN", str(tmp_path / "chain.bin"))
    monkeypatch.setenv("MOVSC_PASSPHRASE", "pw")
    return tmp_path


def make(capsys, env, name, role):
    path = str(env / f"{name}.json")
    assert run(capsys, cli.main, "identity", "--role", role, "--out", path)[0] == 0
    code, out = run(capsys, cli.main, "--identity", path, "register")
    assert code == 0 and out["ok"]
    return path, out["address"]


def test_end_to_end(capsys, env):
    op, _ = make(capsys, env, "op", "peer")
    code, out = run(capsys, cli.main, "--identity", op, "bootstrap")
    assert out["registered"] == ["SHA256", "KECCAK256", "SHA3_256"]
    assert run(capsys, cli.main, "--identity", op, "bootstrap")[1]["registered"] == []

    alice, _ = make(capsys, env, "alice", "client")
    nora, nora_addr = make(capsys, env, "nora", "notary")

    blob = env / "data.bin"
    blob.write_bytes(b"some research data" * 100)
    code, out = run(capsys, cli.main, "--identity", alice, "certify", str(blob))
    assert code == 0
    h = out["data_hash"]
    import hashlib

    assert h == hashlib.sha256(blob.read_bytes()).hexdigest()

    code, out = run(capsys, cli.main, "--identity", alice, "certify", str(blob))
    assert code == 1 and out == {"ok": False, "error": "AlreadyCertified", "message": out["message"]}

    store = DataStore()
    tok = store.put(blob.read_bytes(), b"secretpw")
    with store.serve_http() as srv:
        url = srv.url_for(tok)
        code, out = run(capsys, cli.main, "--identity", alice, "validate", h, "--notary", nora_addr,
                        "--url", url, "--pw", "secretpw", "--encrypt")
        assert code == 0
        assert url.encode() not in (env / "chain.bin").read_bytes()
        audit = env / "audit.ndjson"
        code, out = run(capsys, cli.notary_main, "run", "--identity", nora, "--poll-ms", "10",
                        "--max-packages", "1", "--audit-log", str(audit))
        assert code == 0 and out["handled"] == 1
        assert json.loads(audit.read_text())["outcome"] == "matched"

    code, out = run(capsys, cli.main, "status", h)
    assert out["certificate"]["status"] == "validated"
    assert out["certificate"]["validator_address"] == nora_addr

    code, out = run(capsys, cli.main, "query", "vps", nora_addr)
    assert len(out["packages"]) == 1 and out["packages"][0]["validated"]

    export = env / "export.json"
    code, out = run(capsys, cli.main, "--identity", alice, "--export-chain", str(export), "withdraw", h)
    assert code == 0
    assert json.loads(export.read_text())["blocks"][-1]["transactions"][0]["call"]["op"] == "withdraw"
    assert run(capsys, cli.main, "status", h)[1]["certificate"]["status"] == "withdrawn"
    code, out = run(capsys, cli.main, "--identity", alice, "withdraw", h)
    assert out["error"] == "AlreadyWithdrawn"

    assert run(capsys, cli.main, "chain", "verify")[1] == {"ok": True, "valid": True}
    code, out = run(capsys, cli.main, "chain", "export", "--out", str(env / "c.json"))
    assert out["height"] == json.loads((env / "c.json").read_text())["height"]


def test_secret_store_is_encrypted_on_disk(capsys, env):
    op, _ = make(capsys, env, "op", "peer")
    run(capsys, cli.main, "--identity", op, "bootstrap")
    alice, _ = make(capsys, env, "alice", "client")
    blob = env / "d"
    blob.write_bytes(b"x")
    run(capsys, cli.main, "--identity", alice, "certify", str(blob))
    secrets = env / "alice.secrets"
    assert json.loads(secrets.read_text())["kdf"] == "scrypt"


def test_publish_and_share(capsys, env):
    op, _ = make(capsys, env, "op", "peer")
    run(capsys, cli.main, "--identity", op, "bootstrap")
    alice, _ = make(capsys, env, "alice", "client")
    _, pete_addr = make(capsys, env, "pete", "peer")
    blob = env / "d"
    blob.write_bytes(b"x")
    h = run(capsys, cli.main, "--identity", alice, "certify", str(blob))[1]["data_hash"]
    assert run(capsys, cli.main, "--identity", alice, "share", h, "--peer", pete_addr,
               "--url", "https://x", "--pw", "p")[0] == 0
    assert run(capsys, cli.main, "--identity", alice, "publish", h, "--url", "https://x/public")[0] == 0
    cert = run(capsys, cli.main, "query", "cert", h)[1]["certificate"]
    assert cert["public_vp"]["data_url"] == b"https://x/public".hex()
    code, out = run(capsys, cli.main, "--identity", alice, "share", h, "--peer", "00" * 20, "--url", "u", "--pw", "p")
    assert code == 1 and out["error"] == "UnknownPeer"


def test_dishonest_notary_needs_simulation(capsys, env, monkeypatch):
    monkeypatch.delenv("MOVSC_SIMULATION", raising=False)
    nora, _ = make(capsys, env, "nora", "notary")
    assert cli.notary_main(["run", "--identity", nora, "--dishonest", "validate-blind", "--max-packages", "0"]) == 2


def test_sim_cli(capsys, tmp_path):
    trace, chain = tmp_path / "t.json", tmp_path / "c.json"
    code, out = run(capsys, cli.sim_main, "run", "happy_path", "--export-trace", str(trace),
                    "--export-chain", str(chain))
    assert code == 0 and "PASS" in out[0]
    assert json.loads(trace.read_text())["scenario"] == "happy_path"
    assert json.loads(chain.read_text())["height"] > 0
    assert cli.sim_main(["suite"]) == 0
    assert cli.sim_main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "bad", "seed": 1, "actors": [{"name": "a", "role": "client"}],
                               "data": {"d": {"size": 1}},
                               "steps": [{"actor": "a", "do": "certify", "cert": "h", "data": "d"}],
                               "expect": [{"check": "status", "cert": "h", "equals": "published"}]}))
    assert cli.sim_main(["run", str(bad)]) == 1


def test_missing_identity(capsys, env):
    with pytest.raises(SystemExit):
        cli.main(["register"])
