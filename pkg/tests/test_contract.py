import random

import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from movsc import codeexec, crypto
from movsc.contract import (
    ERROR_TYPES,
    MAX_RETRIES,
    AlreadyCertified,
    AlreadyWithdrawn,
    CallContext,
    ContractError,
    DuplicateCodeId,
    DuplicateNotary,
    IntegrityMismatch,
    MalformedCall,
    MovingContract,
    NoPublicPackage,
    NotAccepted,
    NotANotaryIdentity,
    NotCertified,
    NotRequestedNotary,
    RetryLimitExceeded,
    Status,
    UnknownCodeId,
    UnknownNotary,
    UnknownPeer,
    Withdrawn,
    WrongSecret,
)
from movsc.identity import Identity, Role

RANK = {Status.CERTIFIED: 0, Status.VALIDATED: 1, Status.SHARED: 2, Status.PUBLISHED: 3}


class Chain:
    """Drives MovingContract directly with an explicit clock and directory."""

    def __init__(self, seed=0):
        rng = random.Random(seed)
        self.c = MovingContract()
        self.t = 1000
        self.dir = {}
        self.ids = {}
        for name, role in [("alice", Role.CLIENT), ("nora", Role.NOTARY), ("nick", Role.NOTARY),
                           ("pete", Role.PEER), ("bob", Role.CLIENT)]:
            ident = Identity.generate(role, rng.randbytes)
            self.ids[name] = ident.address
            self.dir[ident.address] = ident.public()
        for code_id in codeexec.BUILTIN_SOURCES:
            e = codeexec.builtin_entry(code_id)
            self.c.apply("register_code", {"code_id": code_id, "kind": e.kind.value, "source": e.source,
                                           "integrity_hash": e.integrity_hash}, self.ctx("pete"))
        self.c.apply("register_notary", {}, self.ctx("nora"))
        self.c.apply("register_notary", {}, self.ctx("nick"))
        self.secrets = {}
        self.counter = 0

    def ctx(self, who):
        self.t += 1
        return CallContext(self.ids[who], self.t, self.dir)

    def fresh(self):
        self.counter += 1
        return crypto.sha256(b"secret%d" % self.counter)

    def call(self, who, op, **args):
        return self.c.apply(op, args, self.ctx(who))

    def certify(self, data=b"hello", code="SHA256"):
        h = crypto.hash(code, data)
        s = self.fresh()
        self.call("alice", "send_data_hash", data_hash=h, code_id=code, secret_hash=crypto.commit(s))
        self.secrets[h] = s
        return h

    def rotating(self, h, op, **args):
        new = self.fresh()
        result = self.call("alice", op, data_hash=h, secret=self.secrets[h], new_secret_hash=crypto.commit(new), **args)
        self.secrets[h] = new
        return result

    def validate(self, h, notary="nora", code_id=None):
        return self.rotating(h, "request_validation", notary_id=self.ids[notary], data_url=b"u",
                             data_pw=b"p", encrypted=False, code_id=code_id)

    def share(self, h, peer="pete"):
        return self.rotating(h, "share_privately", peer_id=self.ids[peer], data_url=b"u",
                             data_pw=b"p", encrypted=False, code_id=None)

    def answer(self, h, who="nora", result=None):
        self.call(who, "accept_vp", data_hash=h)
        return self.call(who, "send_notary_result", data_hash=h, n_result=h if result is None else result)

    def cert(self, h):
        return self.c.get_certificate(h)


@pytest.fixture
def ch():
    return Chain()


def test_certify(ch):
    h = ch.certify(b"abc")
    cert = ch.cert(h)
    assert cert.status is Status.CERTIFIED
    assert cert.owner == ch.ids["alice"]
    assert cert.attempts == 0 and cert.vp is None
    assert h.hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_double_certification_rejected_for_anyone(ch):
    h = ch.certify()
    before = ch.c.state_bytes()
    with pytest.raises(AlreadyCertified):
        ch.call("bob", "send_data_hash", data_hash=h, code_id="SHA256", secret_hash=ch.fresh())
    assert ch.c.state_bytes() == before


def test_certify_unknown_code(ch):
    with pytest.raises(UnknownCodeId):
        ch.call("alice", "send_data_hash", data_hash=crypto.sha256(b"x"), code_id="MD5", secret_hash=ch.fresh())


def test_happy_validation(ch):
    h = ch.certify()
    ch.validate(h)
    vp = ch.c.get_vp(ch.ids["nora"])
    assert vp.data_hash == h and not vp.accepted
    code = ch.call("nora", "accept_vp", data_hash=h)
    assert code.code_id == "SHA256"
    assert ch.c.get_vp(ch.ids["nora"]) is None
    assert ch.call("nora", "send_notary_result", data_hash=h, n_result=h) is True
    cert = ch.cert(h)
    assert cert.status is Status.VALIDATED and cert.vp.validated
    assert cert.validator_address == ch.ids["nora"]
    assert cert.vp.timestamp is not None


def test_mismatch_counts_attempt(ch):
    h = ch.certify()
    ch.validate(h)
    assert ch.answer(h, result=crypto.sha256(b"other")) is False
    cert = ch.cert(h)
    assert cert.attempts == 1 and cert.status is Status.CERTIFIED and not cert.vp.validated


def test_retry_limit(ch):
    h = ch.certify()
    for _ in range(MAX_RETRIES):
        ch.validate(h)
        ch.answer(h, result=crypto.sha256(b"wrong"))
    before = ch.c.state_bytes()
    with pytest.raises(RetryLimitExceeded):
        ch.validate(h)
    assert ch.c.state_bytes() == before
    assert ch.cert(h).attempts == MAX_RETRIES


@pytest.mark.parametrize("op", ["request_validation", "publish", "share_privately", "withdraw"])
def test_secret_is_single_use(ch, op):
    h = ch.certify()
    old = ch.secrets[h]
    actions = {
        "request_validation": lambda: ch.validate(h),
        "share_privately": lambda: ch.share(h),
        "publish": lambda: ch.rotating(h, "publish", data_url=b"https://x"),
        "withdraw": lambda: ch.rotating(h, "withdraw"),
    }
    actions[op]()
    with pytest.raises(WrongSecret):
        ch.call("alice", "request_validation", notary_id=ch.ids["nora"], data_hash=h, data_url=b"",
                data_pw=b"", encrypted=False, secret=old, new_secret_hash=ch.fresh(), code_id=None)


def test_validation_of_uncertified_data(ch):
    with pytest.raises(NotCertified):
        ch.call("alice", "request_validation", notary_id=ch.ids["nora"], data_hash=crypto.sha256(b"x"),
                data_url=b"", data_pw=b"", encrypted=False, secret=b"s", new_secret_hash=ch.fresh(), code_id=None)


def test_wrong_secret_changes_nothing(ch):
    h = ch.certify()
    before = ch.c.state_bytes()
    with pytest.raises(WrongSecret):
        ch.call("bob", "publish", data_hash=h, data_url=b"u", secret=b"guess", new_secret_hash=ch.fresh())
    assert ch.c.state_bytes() == before


def test_unknown_notary_and_peer(ch):
    h = ch.certify()
    with pytest.raises(UnknownNotary):
        ch.validate(h, notary="pete")  # registered identity, not a notary
    h2 = ch.certify(b"two")
    import dataclasses

    nick = ch.ids["nick"]
    ch.c.notaries[nick] = dataclasses.replace(ch.c.notaries[nick], active=False)
    with pytest.raises(UnknownNotary):
        ch.validate(h2, notary="nick")
    with pytest.raises(UnknownPeer):
        ch.rotating(h2, "share_privately", peer_id=bytes(20), data_url=b"", data_pw=b"", encrypted=False, code_id=None)


def test_failed_call_does_not_rotate_secret(ch):
    h = ch.certify()
    secret = ch.secrets[h]
    with pytest.raises(UnknownNotary):
        ch.validate(h, notary="pete")
    ch.secrets[h] = secret
    ch.validate(h)


def test_code_override_for_validation(ch):
    h = ch.certify()
    ch.validate(h, code_id="KECCAK256")
    assert ch.cert(h).used_code == "KECCAK256"
    assert ch.call("nora", "accept_vp", data_hash=h).code_id == "KECCAK256"
    with pytest.raises(UnknownCodeId):
        ch.validate(h, code_id="nope")


def test_only_requested_notary_answers(ch):
    h = ch.certify()
    ch.validate(h)
    with pytest.raises(NotRequestedNotary):
        ch.call("nick", "accept_vp", data_hash=h)
    with pytest.raises(NotRequestedNotary):
        ch.call("nick", "send_notary_result", data_hash=h, n_result=h)
    with pytest.raises(NotAccepted):
        ch.call("nora", "send_notary_result", data_hash=h, n_result=h)
    ch.answer(h)
    with pytest.raises(NotRequestedNotary):
        ch.call("nora", "send_notary_result", data_hash=h, n_result=h)


def test_new_request_voids_open_package(ch):
    h = ch.certify()
    ch.validate(h, notary="nora")
    ch.validate(h, notary="nick")
    assert ch.c.get_vp(ch.ids["nora"]) is None
    with pytest.raises(NotRequestedNotary):
        ch.call("nora", "accept_vp", data_hash=h)
    ch.answer(h, "nick")
    assert ch.cert(h).validator_address == ch.ids["nick"]


def test_get_vp_fifo(ch):
    hs = [ch.certify(bytes([i])) for i in range(3)]
    for h in hs:
        ch.validate(h)
    order = []
    while (vp := ch.c.get_vp(ch.ids["nora"])) is not None:
        order.append(vp.data_hash)
        ch.answer(vp.data_hash)
    assert order == hs


def test_sharing(ch):
    h = ch.certify()
    ch.share(h)
    assert ch.c.get_vp(ch.ids["pete"]).kind.value == "share"
    ch.answer(h, "pete")
    assert ch.cert(h).status is Status.SHARED
    assert ch.cert(h).validator_address is None


def test_publication_first_confirmer_wins(ch):
    h = ch.certify()
    ch.rotating(h, "publish", data_url=b"https://example.org/d")
    assert [vp.data_hash for vp in ch.c.get_public_vps()] == [h]
    assert ch.call("bob", "confirm_publication", data_hash=h, n_result=crypto.sha256(b"no")) is False
    assert ch.cert(h).public_vp.attempts == 1
    assert ch.call("pete", "confirm_publication", data_hash=h, n_result=h) is True
    assert ch.call("bob", "confirm_publication", data_hash=h, n_result=h) is True
    cert = ch.cert(h)
    assert cert.status is Status.PUBLISHED and cert.validator_address == ch.ids["pete"]
    assert cert.attempts == 0


def test_public_mismatches_are_capped(ch):
    h = ch.certify()
    ch.rotating(h, "publish", data_url=b"u")
    for _ in range(10):
        ch.call("bob", "confirm_publication", data_hash=h, n_result=bytes(32))
    assert ch.cert(h).public_vp.attempts == MAX_RETRIES


def test_confirm_without_publication(ch):
    h = ch.certify()
    with pytest.raises(NoPublicPackage):
        ch.call("pete", "confirm_publication", data_hash=h, n_result=h)
    with pytest.raises(NoPublicPackage):
        ch.call("pete", "confirm_publication", data_hash=crypto.sha256(b"z"), n_result=h)


def test_status_never_goes_down(ch):
    h = ch.certify()
    ch.rotating(h, "publish", data_url=b"u")
    ch.call("pete", "confirm_publication", data_hash=h, n_result=h)
    ch.validate(h)
    ch.answer(h)
    ch.share(h)
    ch.answer(h, "pete")
    assert ch.cert(h).status is Status.PUBLISHED


def test_withdraw(ch):
    h = ch.certify()
    ch.validate(h)
    ch.rotating(h, "withdraw")
    cert = ch.cert(h)
    assert cert.status is Status.WITHDRAWN and cert.withdrawn_at is not None
    assert cert.vp.voided and ch.c.get_vp(ch.ids["nora"]) is None
    with pytest.raises(AlreadyWithdrawn):
        ch.rotating(h, "withdraw")
    for fn in (lambda: ch.validate(h), lambda: ch.share(h), lambda: ch.rotating(h, "publish", data_url=b"u")):
        with pytest.raises(Withdrawn):
            fn()
    with pytest.raises(AlreadyCertified):
        ch.call("bob", "send_data_hash", data_hash=h, code_id="SHA256", secret_hash=ch.fresh())


def test_withdraw_blocks_pending_answers(ch):
    h = ch.certify()
    ch.validate(h)
    ch.call("nora", "accept_vp", data_hash=h)
    ch.rotating(h, "withdraw")
    with pytest.raises(Withdrawn):
        ch.call("nora", "send_notary_result", data_hash=h, n_result=h)


def test_code_registry(ch):
    src = codeexec.BUILTIN_SOURCES["SHA256"]
    with pytest.raises(DuplicateCodeId):
        ch.call("pete", "register_code", code_id="SHA256", kind="inline_source", source=src,
                integrity_hash=crypto.sha256(src.encode()))
    with pytest.raises(IntegrityMismatch):
        ch.call("pete", "register_code", code_id="X", kind="inline_source", source=src, integrity_hash=bytes(32))
    assert set(codeexec.BUILTIN_SOURCES) <= set(ch.c.list_codes())
    with pytest.raises(UnknownCodeId):
        ch.c.get_code("X")


def test_notary_registry(ch):
    with pytest.raises(DuplicateNotary):
        ch.call("nora", "register_notary")
    with pytest.raises(NotANotaryIdentity):
        ch.call("alice", "register_notary")
    assert {n.notary_id for n in ch.c.list_notaries()} == {ch.ids["nora"], ch.ids["nick"]}


@pytest.mark.parametrize(
    "op,args",
    [
        ("send_data_hash", {"data_hash": b"x", "code_id": "SHA256", "secret_hash": b"\x01" * 32}),
        ("send_data_hash", {"data_hash": bytes(32), "code_id": "SHA256"}),
        ("send_data_hash", {"data_hash": bytes(32), "code_id": "SHA256", "secret_hash": bytes(32)}),
        ("publish", {"data_hash": bytes(32), "data_url": "str", "secret": b"", "new_secret_hash": b"\x01" * 32}),
        ("nope", {}),
    ],
)
def test_malformed_calls(ch, op, args):
    with pytest.raises(MalformedCall):
        ch.c.apply(op, args, ch.ctx("alice"))


def test_error_codes():
    assert len(ERROR_TYPES) == 16
    for name, cls in ERROR_TYPES.items():
        assert issubclass(cls, ContractError) and cls("x").code == name


def test_state_bytes_deterministic():
    a, b = Chain(seed=5), Chain(seed=5)
    for ch in (a, b):
        h = ch.certify()
        ch.validate(h)
        ch.answer(h)
    assert a.c.state_bytes() == b.c.state_bytes()


def test_validation_soundness_small_instances():
    # Every data byte-string up to 2 bytes over a small alphabet: validation
    # succeeds iff the notary hashes the certified bytes themselves.
    alphabet = [b"", b"\x00", b"\x01", b"\xff", b"\x00\x00", b"\x00\x01", b"\x01\x00"]
    for certified in alphabet:
        for delivered in alphabet:
            ch = Chain()
            h = ch.certify(certified)
            ch.validate(h)
            ok = ch.answer(h, result=crypto.sha256(delivered))
            assert ok == (certified == delivered)
            assert (ch.cert(h).status is Status.VALIDATED) == (certified == delivered)


class Lifecycle(RuleBasedStateMachine):
    """Random call sequences against one certificate never break invariants."""

    def __init__(self):
        super().__init__()
        self.ch = Chain()
        self.h = self.ch.certify(b"lifecycle")
        self.last_rank = 0
        self.withdrawn = False
        self.last_attempts = 0

    def _try(self, fn):
        before = self.ch.c.state_bytes()
        secret = self.ch.secrets[self.h]
        try:
            fn()
        except ContractError:
            assert self.ch.c.state_bytes() == before
            self.ch.secrets[self.h] = secret

    @rule(notary=st.sampled_from(["nora", "nick"]))
    def validate(self, notary):
        self._try(lambda: self.ch.validate(self.h, notary))

    @rule()
    def share(self):
        self._try(lambda: self.ch.share(self.h))

    @rule()
    def publish(self):
        self._try(lambda: self.ch.rotating(self.h, "publish", data_url=b"u"))

    @rule(good=st.booleans(), who=st.sampled_from(["nora", "nick", "pete"]))
    def answer(self, good, who):
        result = self.h if good else bytes(32)
        self._try(lambda: self.ch.answer(self.h, who, result))

    @rule(good=st.booleans())
    def confirm(self, good):
        self._try(lambda: self.ch.call("bob", "confirm_publication", data_hash=self.h,
                                       n_result=self.h if good else bytes(32)))

    @precondition(lambda self: not self.withdrawn)
    @rule()
    def withdraw(self):
        self.ch.rotating(self.h, "withdraw")
        self.withdrawn = True

    @rule()
    def replay_stale_secret(self):
        with pytest.raises(WrongSecret):
            self.ch.call("alice", "publish", data_hash=self.h, data_url=b"", secret=b"stale",
                         new_secret_hash=self.ch.fresh())

    @invariant()
    def invariants(self):
        cert = self.ch.cert(self.h)
        assert cert.attempts <= MAX_RETRIES
        assert cert.attempts >= self.last_attempts
        self.last_attempts = cert.attempts
        if self.withdrawn:
            assert cert.status is Status.WITHDRAWN
            assert cert.vp is None or not cert.vp.is_open
        else:
            rank = RANK[cert.status]
            assert rank >= self.last_rank
            self.last_rank = rank
        open_pkgs = [p for p in self.ch.c.packages if p.data_hash == self.h and p.is_open and not p.is_public]
        assert len(open_pkgs) <= 1


TestLifecycle = Lifecycle.TestCase
TestLifecycle.settings = settings(max_examples=60, stateful_step_count=25, deadline=None)
