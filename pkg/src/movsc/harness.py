"""Scripted multi-actor scenarios over a fresh ledger, contract and data store.

A scenario is data (see ``scenarios/*.json``): a roster of actors, named
data blobs, an ordered list of steps and a list of expected predicates.
Everything random (keys, secrets, envelope nonces, store tokens, blobs)
comes from one ``random.Random(seed)`` and the ledger runs on a mock
clock, so a scenario replays byte-for-byte under the same seed.

Steps run one after another; actors interact only through the ledger and
the data store.  A step may declare ``expect_error``; any other contract
error fails the scenario, and a non-protocol exception is reported as a
panic instead of being swallowed.
"""

from __future__ import annotations

import hashlib
import json
import random
import traceback
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from . import codeexec, crypto, datastore
from .client import ClientSession
from .contract import ContractError, Status
from .identity import Identity, Role
from .interface import ContractInterface
from .ledger import Ledger, LedgerError, Receipt
from .notary import AuditLog, NotaryDaemon, confirm_publication

BUILTIN_SUITE = (
    "happy_path",
    "encrypted_validation",
    "tampered_data",
    "cheating_client",
    "cheating_notary_blind",
    "cheating_notary_invalidate",
    "wrong_secret",
    "double_certify",
    "withdraw_then_validate",
    "private_share",
    "publish_unvalidated",
    "retry_exhaustion",
)

OPERATOR = "operator"


class ScenarioError(Exception):
    """The scenario document itself is malformed."""


class ScenarioPanic(Exception):
    """An actor crashed with something other than a protocol error."""


class MockClock:
    def __init__(self, start: int = 1_700_000_000, step: int = 1):
        self.now = start
        self.step = step

    def __call__(self) -> int:
        now = self.now
        self.now += self.step
        return now


@dataclass
class Scenario:
    name: str
    actors: list[dict]
    steps: list[dict]
    expect: list[dict]
    data: dict[str, dict] = field(default_factory=dict)
    seed: int = 0
    description: str = ""

    @classmethod
    def from_dict(cls, obj: dict) -> "Scenario":
        try:
            return cls(
                name=obj["name"],
                actors=list(obj["actors"]),
                steps=list(obj["steps"]),
                expect=list(obj.get("expect", [])),
                data=dict(obj.get("data", {})),
                seed=int(obj.get("seed", 0)),
                description=obj.get("description", ""),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def builtin(cls, name: str) -> "Scenario":
        text = resources.files("movsc").joinpath("scenarios", f"{name}.json").read_text()
        return cls.from_dict(json.loads(text))


@dataclass
class PredicateResult:
    description: str
    passed: bool
    detail: str = ""


@dataclass
class ScenarioReport:
    name: str
    seed: int
    predicates: list[PredicateResult]
    trace: list[dict]
    world: "World"
    panic: str | None = None

    @property
    def passed(self) -> bool:
        return self.panic is None and all(p.passed for p in self.predicates)

    @property
    def ledger(self) -> Ledger:
        return self.world.ledger

    def errors_on_chain(self) -> set[str]:
        return {r.error.code for block in self.ledger.receipts for r in block if r.error is not None}

    def trace_json(self) -> str:
        return json.dumps(
            {"scenario": self.name, "seed": self.seed, "events": self.trace},
            indent=2,
            sort_keys=True,
        )

    def summary(self) -> str:
        lines = [f"scenario {self.name} (seed {self.seed}): {'PASS' if self.passed else 'FAIL'}"]
        for p in self.predicates:
            mark = "ok  " if p.passed else "FAIL"
            lines.append(f"  [{mark}] {p.description}" + (f" -- {p.detail}" if p.detail and not p.passed else ""))
        if self.panic:
            lines.append(f"  PANIC: {self.panic}")
        return "\n".join(lines)


def _jsonable(value: Any) -> Any:
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if hasattr(value, "to_obj"):
        return _jsonable(value.to_obj())
    if hasattr(value, "value"):
        return value.value
    return value


class World:
    """All live objects of one scenario run."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.random = random.Random(seed)
        self.rng = self.random.randbytes
        self.clock = MockClock()
        self.ledger = Ledger(clock=self.clock)
        self.store = datastore.DataStore(rng=self.rng, simulation=True)
        self.resolve = datastore.Resolver(self.store)
        self.identities: dict[str, Identity] = {}
        self.ifaces: dict[str, ContractInterface] = {}
        self.clients: dict[str, ClientSession] = {}
        self.daemons: dict[str, NotaryDaemon] = {}
        self.data: dict[str, bytes] = {}
        self.certs: dict[str, bytes] = {}  # alias -> data hash
        self.cert_data: dict[str, str] = {}  # alias -> data name
        self.hosted: dict[str, str] = {}  # alias -> latest store token
        self.consumed: dict[str, list[bytes]] = {}  # alias -> spent preimages
        self.encrypted_plaintexts: list[tuple[bytes, bytes]] = []
        self.public_checks: list[dict] = []
        self.step_results: dict[str, dict] = {}

        self._setup()

    def _setup(self) -> None:
        operator = Identity.generate(Role.PEER, self.rng)
        self.identities[OPERATOR] = operator
        self.ifaces[OPERATOR] = ContractInterface(self.ledger, operator)
        self.ledger.register_identity(operator)
        for code_id in codeexec.BUILTIN_SOURCES:
            entry = codeexec.builtin_entry(code_id)
            self.ifaces[OPERATOR].register_code(
                code_id, entry.kind.value, entry.source, entry.integrity_hash
            ).raise_for_error()

        for actor in self.scenario.actors:
            name, role = actor["name"], Role(actor["role"])
            if name in self.identities:
                raise ScenarioError(f"duplicate actor {name!r}")
            ident = Identity.generate(role, self.rng)
            iface = ContractInterface(self.ledger, ident)
            self.identities[name] = ident
            self.ifaces[name] = iface
            if actor.get("registered", True):
                self.ledger.register_identity(ident)
            if role is Role.CLIENT:
                self.clients[name] = ClientSession(iface, rng=self.rng)
            else:
                self.daemons[name] = NotaryDaemon(
                    iface,
                    self.resolve,
                    dishonest=actor.get("dishonest"),
                    simulation=True,
                    audit_log=AuditLog(),
                )
                if (
                    role is Role.NOTARY
                    and actor.get("registered", True)
                    and actor.get("register_notary", True)
                ):
                    iface.register_notary().raise_for_error()

        for name, spec in self.scenario.data.items():
            if "text" in spec:
                self.data[name] = spec["text"].encode("utf-8")
            else:
                self.data[name] = self.random.randbytes(int(spec["size"]))

    # helpers used by actions

    def address(self, name: str) -> bytes:
        try:
            return self.identities[name].address
        except KeyError:
            raise ScenarioError(f"unknown actor {name!r}") from None

    def data_hash(self, step: dict) -> bytes:
        alias = step.get("cert")
        if alias in self.certs:
            return self.certs[alias]
        if "uncertified_data" in step:
            return hashlib.sha256(self.data[step["uncertified_data"]]).digest()
        raise ScenarioError(f"unknown certificate alias {alias!r}")

    def host(self, alias: str, data_name: str | None, public: bool = False) -> tuple[str, bytes]:
        name = data_name or self.cert_data[alias]
        password = b"" if public else self.random.randbytes(12).hex().encode()
        token = self.store.put(self.data[name], password)
        self.hosted[alias] = token
        return self.store.url_for(token), password

    def secret_for(self, step: dict, client: ClientSession, data_hash: bytes) -> bytes | None:
        """``None`` means: let the client use its own current secret."""
        mode = step.get("secret")
        if mode is None:
            return None
        if mode == "random":
            return self.rng(32)
        if mode == "stale":
            spent = self.consumed.get(step["cert"])
            if not spent:
                raise ScenarioError("no consumed secret to replay")
            return spent[-1]
        raise ScenarioError(f"unknown secret mode {mode!r}")


# -- actions ----------------------------------------------------------------


def _client(world: World, step: dict) -> ClientSession:
    try:
        return world.clients[step["actor"]]
    except KeyError:
        raise ScenarioError(f"{step.get('actor')!r} is not a client") from None


def _rotating(world: World, step: dict, client: ClientSession, data_hash: bytes, run_client, run_raw):
    """Run a secret-consuming step.

    Without a ``secret`` override the client's own preimage is spent (through
    ``run_client`` when given).  Spent preimages are remembered so later steps
    can replay them with ``"secret": "stale"``.
    """
    mode = step.get("secret")
    own = client.store.get(data_hash)
    if mode is None and run_client is not None:
        receipt = run_client()
    else:
        secret = (own or b"") if mode is None else world.secret_for(step, client, data_hash)
        fresh = crypto.generate_secret(world.rng)
        receipt = run_raw(secret, fresh.commitment)
        if receipt.error is not None:
            raise receipt.error
        if mode is None:
            client.store.set(data_hash, fresh.preimage)
    if mode is None and own is not None and "cert" in step:
        world.consumed.setdefault(step["cert"], []).append(own)
    return receipt


def act_certify(world: World, step: dict) -> Any:
    client = _client(world, step)
    alias, data_name = step["cert"], step["data"]
    code = step.get("code", "SHA256")
    if step.get("fabricate"):
        digest = world.rng(32)
    else:
        digest = client.compute_hash(world.data[data_name], code)
    world.certs[alias] = digest
    world.cert_data[alias] = data_name
    client.certify_digest(digest, step.get("claim_code", code))
    return {"data_hash": digest}


def act_validate(world: World, step: dict) -> Any:
    client = _client(world, step)
    data_hash = world.data_hash(step)
    notary = world.address(step["notary"])
    encrypt = step.get("encrypt", True)
    if "cert" in step and step["cert"] in world.cert_data:
        url, pw = world.host(step["cert"], step.get("data"))
    else:
        url, pw = "movsc-store://none", b""
    if encrypt:
        world.encrypted_plaintexts.append((url.encode(), pw))

    def raw(secret, new):
        u, p = url.encode(), pw
        if encrypt:
            key = world.ledger.get_public_key(notary)
            u = crypto.encrypt(u, key, world.rng).to_bytes()
            p = crypto.encrypt(p, key, world.rng).to_bytes()
        return client.iface.request_validation(notary, data_hash, u, p, encrypt, secret, new, step.get("code"))

    _rotating(
        world, step, client, data_hash,
        lambda: client.initiate_data_validation(data_hash, notary, url, pw, encrypt, step.get("code")),
        raw,
    )
    return {"url": url}


def act_share(world: World, step: dict) -> Any:
    client = _client(world, step)
    data_hash = world.data_hash(step)
    peer = world.address(step["peer"])
    url, pw = world.host(step["cert"], step.get("data"))
    encrypt = step.get("encrypt", True)
    if encrypt:
        world.encrypted_plaintexts.append((url.encode(), pw))
    _rotating(
        world, step, client, data_hash,
        (lambda: client.share_privately(data_hash, peer, url, pw)) if encrypt else None,
        lambda secret, new: client.iface.share_privately(peer, data_hash, url.encode(), pw, False, secret, new),
    )
    return {"url": url}


def act_publish(world: World, step: dict) -> Any:
    client = _client(world, step)
    data_hash = world.data_hash(step)
    url, _ = world.host(step["cert"], step.get("data"), public=True)
    _rotating(
        world, step, client, data_hash,
        lambda: client.publish_data(data_hash, url),
        lambda secret, new: client.iface.publish(data_hash, url.encode(), secret, new),
    )
    return {"url": url}


def act_withdraw(world: World, step: dict) -> Any:
    client = _client(world, step)
    data_hash = world.data_hash(step)
    _rotating(
        world, step, client, data_hash,
        lambda: client.withdraw_result(data_hash),
        lambda secret, new: client.iface.withdraw(data_hash, secret, new),
    )
    return True


def act_process(world: World, step: dict) -> Any:
    daemon = world.daemons.get(step["actor"])
    if daemon is None:
        raise ScenarioError(f"{step['actor']!r} runs no daemon")
    outcome = daemon.poll_once()
    if outcome is None:
        return {"outcome": "idle"}
    return {
        "outcome": outcome.outcome.value,
        "digest": outcome.digest,
        "sent": outcome.sent,
        "reason": outcome.reason,
    }


def act_confirm(world: World, step: dict) -> Any:
    iface = world.ifaces[step["actor"]]
    data_hash = world.data_hash(step)
    digest, receipt = confirm_publication(iface, data_hash, world.resolve)
    if receipt.error is not None:
        raise receipt.error
    world.public_checks.append(
        {"actor": step["actor"], "cert": step["cert"], "digest": digest, "match": receipt.result}
    )
    return {"match": receipt.result, "digest": digest}


def act_tamper(world: World, step: dict) -> Any:
    token = world.hosted[step["cert"]]
    kind = step.get("mutation", "flip")
    length = world.store._get(token).content_length
    if kind == "flip":
        offset = step.get("offset", world.random.randrange(max(1, length)))
        mutation = datastore.flip_byte(offset, step.get("mask", 0x01))
    elif kind == "truncate":
        mutation = datastore.truncate(step.get("length", max(0, length - 1)))
    elif kind == "identity":
        mutation = datastore.identity_mutation
    else:
        raise ScenarioError(f"unknown mutation {kind!r}")
    world.store.tamper(token, mutation)
    return {"mutation": kind}


def act_register_code(world: World, step: dict) -> Any:
    iface = world.ifaces[step["actor"]]
    source = step["source"]
    if source.startswith("builtin:"):
        source = codeexec.BUILTIN_SOURCES[source.split(":", 1)[1]]
    digest = crypto.sha256(source.encode("utf-8"))
    if step.get("corrupt_hash"):
        digest = crypto.sha256(digest)
    receipt = iface.register_code(step["code_id"], step.get("kind", "inline_source"), source, digest)
    return receipt.raise_for_error().result


def act_register_notary(world: World, step: dict) -> Any:
    return world.ifaces[step["actor"]].register_notary().raise_for_error().result


def act_accept(world: World, step: dict) -> Any:
    receipt = world.ifaces[step["actor"]].accept_vp(world.data_hash(step)).raise_for_error()
    return {"code_id": receipt.result.code_id}


def act_report(world: World, step: dict) -> Any:
    data_hash = world.data_hash(step)
    digest = data_hash if step.get("digest", "true") == "true" else crypto.sha256(data_hash)
    receipt = world.ifaces[step["actor"]].send_notary_result(data_hash, digest)
    return {"match": receipt.raise_for_error().result}


ACTIONS = {
    "certify": act_certify,
    "validate": act_validate,
    "share": act_share,
    "publish": act_publish,
    "withdraw": act_withdraw,
    "process": act_process,
    "confirm": act_confirm,
    "tamper": act_tamper,
    "register_code": act_register_code,
    "register_notary": act_register_notary,
    "accept": act_accept,
    "report": act_report,
}


# -- predicates -------------------------------------------------------------


def _cert(world: World, alias: str):
    return world.ledger.contract.certs.get(world.certs.get(alias, b""))


def check_predicate(world: World, spec: dict) -> PredicateResult:
    kind = spec["check"]
    desc = spec.get("description") or json.dumps(spec, sort_keys=True)
    try:
        actual: Any
        if kind == "status":
            cert = _cert(world, spec["cert"])
            actual = None if cert is None else cert.status.value
        elif kind == "validated":
            cert = _cert(world, spec["cert"])
            actual = bool(cert and cert.vp and cert.vp.validated)
        elif kind == "attempts":
            cert = _cert(world, spec["cert"])
            actual = None if cert is None else cert.attempts
        elif kind == "cert_exists":
            actual = _cert(world, spec["cert"]) is not None
        elif kind == "validator":
            cert = _cert(world, spec["cert"])
            actual = cert.validator_address == world.address(spec["actor"])
            spec = {**spec, "equals": spec.get("equals", True)}
        elif kind == "step_result":
            actual = world.step_results[spec["step"]].get(spec.get("field", "result"))
        elif kind == "audit":
            records = world.daemons[spec["actor"]].audit.records
            actual = sum(1 for r in records if r["outcome"] == spec["outcome"])
        elif kind == "notary_exposed":
            actual = _notary_exposed(world, spec["cert"], spec["notary"])
            spec = {**spec, "equals": spec.get("equals", True)}
        elif kind == "conflicting_results":
            actual = _conflicting(world, spec["cert"])
            spec = {**spec, "equals": spec.get("equals", True)}
        elif kind == "secret_store_consistent":
            actual = _secrets_consistent(world, spec["actor"])
            spec = {**spec, "equals": spec.get("equals", True)}
        elif kind == "chain_valid":
            actual = world.ledger.verify_chain()
            spec = {**spec, "equals": spec.get("equals", True)}
        else:
            return PredicateResult(desc, False, f"unknown check {kind!r}")
    except (KeyError, ScenarioError) as exc:
        return PredicateResult(desc, False, f"cannot evaluate: {exc!r}")
    expected = spec.get("equals")
    return PredicateResult(desc, actual == expected, f"expected {expected!r}, got {actual!r}")


def _notary_exposed(world: World, alias: str, notary: str) -> bool:
    """Notary approved the certificate, yet an honest public recomputation disagrees."""
    cert = _cert(world, alias)
    if cert is None:
        return False
    approved = any(
        vp.recipient == world.address(notary) and vp.validated and vp.data_hash == cert.data_hash
        for vp in world.ledger.contract.packages
    )
    refuted = any(
        c["cert"] == alias and c["digest"] is not None and c["digest"] != cert.data_hash
        for c in world.public_checks
    )
    return approved and refuted


def _conflicting(world: World, alias: str) -> bool:
    data_hash = world.certs[alias].hex()
    outcomes = {
        r["outcome"]
        for d in world.daemons.values()
        for r in d.audit.records
        if r["data_hash"] == data_hash
    }
    return {"matched", "mismatched"} <= outcomes


def _secrets_consistent(world: World, actor: str) -> bool:
    client = world.clients[actor]
    for data_hash, preimage in client.store.items().items():
        cert = world.ledger.contract.certs.get(data_hash)
        if cert is None or crypto.commit(preimage) != cert.secret_hash:
            return False
    return True


# -- runner -----------------------------------------------------------------


def run_scenario(scenario: Scenario, seed: int | None = None) -> ScenarioReport:
    seed = scenario.seed if seed is None else seed
    world = World(scenario, seed)
    trace: list[dict] = []
    predicates: list[PredicateResult] = []
    panic = None

    for index, step in enumerate(scenario.steps):
        step_id = step.get("id", f"step{index}")
        action = ACTIONS.get(step.get("do"))
        if action is None:
            raise ScenarioError(f"{step_id}: unknown action {step.get('do')!r}")
        event = {"step": index, "id": step_id, "actor": step.get("actor"), "do": step["do"]}
        result, error = None, None
        try:
            result = action(world, step)
        except (ContractError, LedgerError) as exc:
            error = type(exc).__name__
        except Exception as exc:  # noqa: BLE001
            panic = f"{step_id} ({step.get('actor')}): {type(exc).__name__}: {exc}"
            event["panic"] = traceback.format_exc()
            trace.append(event)
            break
        event.update(result=_jsonable(result), error=error, height=world.ledger.height)
        trace.append(event)
        world.step_results[step_id] = {
            "error": error,
            **(result if isinstance(result, dict) else {"result": result}),
        }

        expected_error = step.get("expect_error")
        if expected_error is not None or error is not None:
            predicates.append(
                PredicateResult(
                    f"{step_id}: {step['do']} by {step.get('actor')} fails with {expected_error}"
                    if expected_error
                    else f"{step_id}: {step['do']} by {step.get('actor')} succeeds",
                    error == expected_error,
                    f"expected {expected_error}, got {error}",
                )
            )
        if "expect_outcome" in step:
            got = (result or {}).get("outcome") if isinstance(result, dict) else None
            predicates.append(
                PredicateResult(
                    f"{step_id}: outcome {step['expect_outcome']}",
                    got == step["expect_outcome"],
                    f"got {got}",
                )
            )

    if panic is None:
        predicates.extend(check_predicate(world, spec) for spec in scenario.expect)
    return ScenarioReport(scenario.name, seed, predicates, trace, world, panic)


def run_suite(names=BUILTIN_SUITE, seed: int | None = None) -> list[ScenarioReport]:
    return [run_scenario(Scenario.builtin(name), seed) for name in names]
