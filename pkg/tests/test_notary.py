import hashlib
import json
import threading

import pytest

from movsc import crypto
from movsc.contract import MAX_RETRIES, Status
from movsc.datastore import DataStore, Resolver, flip_byte
from movsc.notary import AuditLog, DishonestMode, NotaryDaemon, Outcome


def request(net, data, notary="nora", encrypted=True, tamper=None):
    alice = net.client("alice")
    h, _ = alice.certify_data(data)
    tok = net.store.put(data, b"pw")
    if tamper is not None:
        net.store.tamper(tok, tamper)
    alice.initiate_data_validation(h, net.addr(notary), net.store.url_for(tok), b"pw", encrypted)
    return alice, h


@pytest.mark.parametrize("encrypted", [True, False])
def test_matched(net, encrypted):
    alice, h = request(net, b"payload", encrypted=encrypted)
    result = net.daemon("nora").poll_once()
    assert result.outcome is Outcome.MATCHED and result.digest == h
    cert = alice.status(h)
    assert cert.status is Status.VALIDATED and cert.validator_address == net.addr("nora")


def test_mismatched(net):
    alice, h = request(net, b"payload", tamper=flip_byte(0))
    result = net.daemon("nora").poll_once()
    assert result.outcome is Outcome.MISMATCHED
    assert result.digest == hashlib.sha256(b"qayload").digest()
    assert alice.status(h).attempts == 1


def test_cross_notary_cannot_decrypt(net):
    alice, h = request(net, b"payload", notary="nora")
    # nick is handed nora's package directly; he cannot open it
    vp = alice.status(h).vp
    result = net.daemon("nick").process_one(vp)
    assert result.outcome is Outcome.FAILED and "DecryptFailure" in result.reason
    assert not alice.status(h).vp.accepted


def test_undecryptable_package_is_not_retried(net):
    alice = net.client("alice")
    h, _ = alice.certify_data(b"d")
    # encrypted for nick but addressed to nora
    bogus = crypto.encrypt(b"u", net.ids["nick"].public().enc_pubkey).to_bytes()
    net.ifaces["alice"].request_validation(
        net.addr("nora"), h, bogus, bogus, True, alice.store.get(h), crypto.sha256(b"n")
    ).raise_for_error()
    daemon = net.daemon("nora")
    results = daemon.drain()
    assert [r.outcome for r in results] == [Outcome.FAILED]
    assert daemon.drain() == []
    assert alice.status(h).attempts == 0


def test_retrieval_failure_sends_nothing(net):
    alice = net.client("alice")
    h, _ = alice.certify_data(b"d")
    alice.initiate_data_validation(h, net.addr("nora"), "movsc-store://missing", b"pw")
    height = net.ledger.height
    result = net.daemon("nora").poll_once()
    assert result.outcome is Outcome.FAILED and "NotFound" in result.reason
    assert net.ledger.height == height + 1  # accept only, no result
    assert alice.status(h).attempts == 0


def test_wrong_password_sends_nothing(net):
    alice = net.client("alice")
    h, _ = alice.certify_data(b"d")
    tok = net.store.put(b"d", b"right")
    alice.initiate_data_validation(h, net.addr("nora"), net.store.url_for(tok), b"wrong")
    result = net.daemon("nora").poll_once()
    assert result.outcome is Outcome.FAILED and "AccessDenied" in result.reason


def test_timeout_sends_nothing(net):
    alice, h = request(net, b"x" * 1000)
    daemon = net.daemon("nora", timeout=-1)
    result = daemon.poll_once()
    assert result.outcome is Outcome.FAILED and "ExecutionTimeout" in result.reason
    assert alice.status(h).status is Status.CERTIFIED


def test_audit_log_digest_matches_oracle(net, tmp_path):
    data = bytes(range(256)) * 77
    request(net, data, tamper=flip_byte(5, 0x80))
    log = AuditLog(tmp_path / "audit.ndjson")
    net.daemon("nora", audit_log=log).poll_once()
    tampered = bytearray(data)
    tampered[5] ^= 0x80
    rec = json.loads((tmp_path / "audit.ndjson").read_text().splitlines()[-1])
    assert rec["digest"] == hashlib.sha256(bytes(tampered)).hexdigest()
    assert rec["outcome"] == "mismatched" and rec["notary"] == net.addr("nora").hex()
    assert log.records[-1] == rec


def test_dishonest_requires_simulation(net):
    with pytest.raises(ValueError):
        NotaryDaemon(net.ifaces["nora"], Resolver(net.store), dishonest="validate-blind")


def test_validate_blind(net):
    alice, h = request(net, b"real", tamper=flip_byte(0))
    daemon = net.daemon("nora", dishonest=DishonestMode.VALIDATE_BLIND)
    result = daemon.poll_once()
    assert result.outcome is Outcome.MATCHED and result.digest is None
    assert daemon.audit.records[-1]["dishonest"] == "validate-blind"
    assert alice.status(h).status is Status.VALIDATED


def test_invalidate_on_purpose(net):
    alice, h = request(net, b"real")
    result = net.daemon("nora", dishonest="invalidate-on-purpose").poll_once()
    assert result.outcome is Outcome.MISMATCHED and result.digest == h and result.sent != h
    assert alice.status(h).attempts == 1


def test_fifo_and_drain(net):
    hs = [request(net, bytes([i]) * 10)[1] for i in range(4)]
    results = net.daemon("nora").drain()
    assert [r.data_hash for r in results] == hs


def test_run_loop_max_packages(net):
    hs = [request(net, bytes([i]) * 10)[1] for i in range(3)]
    daemon = net.daemon("nora", poll_interval=0.01)
    assert daemon.run_loop(threading.Event(), max_packages=3) == 3
    assert all(net.client("alice").status(h).status is Status.VALIDATED for h in hs)


def test_run_loop_stops_and_wakes_on_new_blocks(net):
    daemon = net.daemon("nora", poll_interval=5.0)
    stop = threading.Event()
    handled = []
    t = threading.Thread(target=lambda: handled.append(daemon.run_loop(stop, max_packages=1)))
    t.start()
    alice, h = request(net, b"late arrival")
    t.join(10)
    assert not t.is_alive() and handled == [1]
    assert alice.status(h).status is Status.VALIDATED

    stop.set()
    assert daemon.run_loop(stop) == 0


def test_worker_pool(net):
    hs = [request(net, bytes([i]) * 5000)[1] for i in range(8)]
    daemon = net.daemon("nora", workers=4, poll_interval=0.01)
    assert daemon.run_loop(threading.Event(), max_packages=8) == 8
    assert all(net.client("alice").status(h).status is Status.VALIDATED for h in hs)
    assert len(daemon.audit.records) == 8


def test_retry_limit_via_daemon(net):
    alice, h = request(net, b"data", tamper=flip_byte(0))
    for _ in range(MAX_RETRIES):
        net.daemon("nora").poll_once()
        if alice.status(h).attempts < MAX_RETRIES:
            tok = net.store.put(b"dat!", b"pw")
            alice.initiate_data_validation(h, net.addr("nora"), net.store.url_for(tok), b"pw")
    assert alice.status(h).attempts == MAX_RETRIES
