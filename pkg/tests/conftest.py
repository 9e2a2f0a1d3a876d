import random
from dataclasses import dataclass, field

import pytest

from movsc import codeexec
from movsc.client import ClientSession
from movsc.datastore import DataStore, Resolver
from movsc.harness import MockClock
from movsc.identity import Identity, Role
from movsc.interface import ContractInterface
from movsc.ledger import Ledger
from movsc.notary import NotaryDaemon


@dataclass
class Net:
    """A small network: ledger with builtin code, data store, named actors."""

    ledger: Ledger
    store: DataStore
    rng: random.Random
    ids: dict = field(default_factory=dict)
    ifaces: dict = field(default_factory=dict)
    clients: dict = field(default_factory=dict)

    def actor(self, name, role, register=True, notary=True):
        ident = Identity.generate(role, self.rng.randbytes)
        self.ids[name] = ident
        self.ifaces[name] = ContractInterface(self.ledger, ident)
        if register:
            self.ledger.register_identity(ident)
            if role == Role.NOTARY and notary:
                self.ifaces[name].register_notary().raise_for_error()
        return ident

    def client(self, name):
        """The actor's one client session (and so its one secret store)."""
        if name not in self.clients:
            self.clients[name] = ClientSession(self.ifaces[name], rng=self.rng.randbytes)
        return self.clients[name]

    def daemon(self, name, **kw):
        return NotaryDaemon(self.ifaces[name], Resolver(self.store), simulation=True, **kw)

    def addr(self, name):
        return self.ids[name].address


def build_net(seed=0, path=None):
    rng = random.Random(seed)
    ledger = Ledger(clock=MockClock(), path=path)
    net = Net(ledger, DataStore(rng=rng.randbytes, simulation=True), rng)
    op = net.actor("operator", Role.PEER)
    iface = net.ifaces["operator"]
    for code_id in codeexec.BUILTIN_SOURCES:
        e = codeexec.builtin_entry(code_id)
        iface.register_code(code_id, e.kind.value, e.source, e.integrity_hash).raise_for_error()
    net.actor("alice", Role.CLIENT)
    net.actor("nora", Role.NOTARY)
    net.actor("nick", Role.NOTARY)
    net.actor("pete", Role.PEER)
    return net


@pytest.fixture
def net():
    return build_net()


# -- acceptance reporting -----------------------------------------------------

ACCEPTANCE_TITLES = {
    1: "end-to-end certification + encrypted validation",
    2: "tamper sensitivity",
    3: "secret rotation soundness",
    4: "confidentiality",
    5: "uniqueness",
    6: "hash conformance",
    7: "ledger integrity",
    8: "deterministic replay",
    9: "adversarial suite",
    10: "lifecycle coverage",
}


class AcceptanceLog:
    def __init__(self):
        self.results: dict[int, tuple[bool, str]] = {}
        self.active = False

    def record(self, criterion: int, ok: bool, detail: str) -> None:
        self.results[criterion] = (bool(ok), detail)
        print(self.line(criterion))

    def line(self, criterion: int) -> str:
        ok, detail = self.results.get(criterion, (False, "did not complete"))
        title = ACCEPTANCE_TITLES[criterion]
        return f"criterion {criterion:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"


_ACCEPTANCE = AcceptanceLog()


@pytest.fixture(scope="session")
def acceptance():
    _ACCEPTANCE.active = True
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE.active:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_TITLES):
        terminalreporter.write_line(_ACCEPTANCE.line(n))
