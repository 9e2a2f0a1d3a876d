"""Command-line front ends.

``movsc``         client commands and read-only queries (one JSON object out)
``movsc-notary``  the notary daemon
``movsc-sim``     scenario runner (exit code 0 iff every predicate passes)

All three share a chain file (``--chain`` or ``$MOVSC_CHAIN``).
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import threading
from pathlib import Path
from typing import Any

from . import codeexec
from .client import ClientSession, SecretStore
from .contract import ContractError
from .datastore import DataStoreError, Resolver
from .harness import BUILTIN_SUITE, Scenario, ScenarioError, run_scenario
from .identity import Identity, Role
from .interface import ContractInterface
from .ledger import Ledger, LedgerError, verify_chain_file
from .notary import AuditLog, NotaryDaemon


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


def _emit(obj: dict) -> None:
    print(json.dumps(_jsonable(obj), sort_keys=True))


def _hex(text: str) -> bytes:
    try:
        return bytes.fromhex(text.removeprefix("0x"))
    except ValueError:
        raise SystemExit(f"not a hex string: {text!r}") from None


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--chain", default=os.environ.get("MOVSC_CHAIN", "movsc-chain.bin"))
    parser.add_argument("--identity", default=os.environ.get("MOVSC_IDENTITY"))


def _interface(args) -> ContractInterface:
    if not args.identity:
        raise SystemExit("--identity (or $MOVSC_IDENTITY) is required")
    return ContractInterface(Ledger(path=args.chain), Identity.load(args.identity))


def _session(args) -> ClientSession:
    iface = _interface(args)
    path = args.secrets or str(Path(args.identity).with_suffix(".secrets"))
    passphrase = args.passphrase or os.environ.get("MOVSC_PASSPHRASE")
    return ClientSession(iface, SecretStore(path, passphrase))


def _cert_json(cert) -> dict:
    obj = cert.to_obj()
    obj["vp"] = None if cert.vp is None else cert.vp.to_obj()
    obj["public_vp"] = None if cert.public_vp is None else cert.public_vp.to_obj()
    return obj


def _receipt_json(receipt) -> dict:
    return {"block_height": receipt.block_height, "tx_index": receipt.tx_index}


def _cmd_identity(args) -> dict:
    ident = Identity.generate(Role(args.role))
    ident.save(args.out)
    return {"ok": True, "address": ident.address, "role": ident.role.value, "file": args.out}


def _cmd_register(args) -> dict:
    iface = _interface(args)
    out = {"ok": True, "address": iface.register()}
    if iface.identity.role is Role.NOTARY:
        iface.register_notary().raise_for_error()
        out["notary"] = True
    return out


def _cmd_bootstrap(args) -> dict:
    iface = _interface(args)
    registered = []
    existing = set(iface.list_codes())
    for code_id in codeexec.BUILTIN_SOURCES:
        if code_id in existing:
            continue
        entry = codeexec.builtin_entry(code_id)
        iface.register_code(code_id, entry.kind.value, entry.source, entry.integrity_hash).raise_for_error()
        registered.append(code_id)
    return {"ok": True, "registered": registered}


def _cmd_certify(args) -> dict:
    session = _session(args)
    data_hash, receipt = session.certify_data(args.path, args.code)
    return {"ok": True, "data_hash": data_hash, "code_id": args.code, **_receipt_json(receipt)}


def _cmd_validate(args) -> dict:
    session = _session(args)
    receipt = session.initiate_data_validation(
        _hex(args.hash), _hex(args.notary), args.url, (args.pw or "").encode(), args.encrypt
    )
    return {"ok": True, "data_hash": args.hash, **_receipt_json(receipt)}


def _cmd_publish(args) -> dict:
    receipt = _session(args).publish_data(_hex(args.hash), args.url)
    return {"ok": True, "data_hash": args.hash, **_receipt_json(receipt)}


def _cmd_share(args) -> dict:
    receipt = _session(args).share_privately(_hex(args.hash), _hex(args.peer), args.url, args.pw.encode())
    return {"ok": True, "data_hash": args.hash, **_receipt_json(receipt)}


def _cmd_withdraw(args) -> dict:
    receipt = _session(args).withdraw_result(_hex(args.hash))
    return {"ok": True, "data_hash": args.hash, **_receipt_json(receipt)}


def _cmd_status(args) -> dict:
    ledger = Ledger(path=args.chain)
    cert = ledger.view(lambda c: c.get_certificate(_hex(args.hash)))
    return {"ok": True, "certificate": _cert_json(cert)}


def _cmd_query(args) -> dict:
    ledger = Ledger(path=args.chain)
    if args.what == "cert":
        cert = ledger.view(lambda c: c.get_certificate(_hex(args.key)))
        return {"ok": True, "certificate": _cert_json(cert)}
    address = _hex(args.key)
    vps = ledger.view(lambda c: [vp.to_obj() for vp in c.packages if vp.recipient == address])
    return {"ok": True, "address": address, "packages": vps}


def _cmd_chain(args) -> dict:
    if args.action == "verify":
        return {"ok": True, "valid": verify_chain_file(args.chain)}
    ledger = Ledger.load(args.chain)
    text = ledger.export_json()
    if args.out:
        Path(args.out).write_text(text)
        return {"ok": True, "height": ledger.height, "file": args.out}
    return {"ok": True, **json.loads(text)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="movsc", description="Moving smart contract client")
    _common(parser)
    parser.add_argument("--secrets", help="encrypted secret store (default: <identity>.secrets)")
    parser.add_argument("--passphrase", help="secret store passphrase (default: $MOVSC_PASSPHRASE)")
    parser.add_argument("--export-chain", metavar="OUT", help="also write a JSON export of the chain")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identity", help="create an identity file")
    p.add_argument("--role", choices=[r.value for r in Role], default="client")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_identity)

    sub.add_parser("register", help="publish the identity's keys on chain").set_defaults(func=_cmd_register)
    sub.add_parser("bootstrap", help="register the builtin hashing code").set_defaults(func=_cmd_bootstrap)

    p = sub.add_parser("certify")
    p.add_argument("path")
    p.add_argument("--code", default="SHA256")
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("validate")
    p.add_argument("hash")
    p.add_argument("--notary", required=True)
    p.add_argument("--url", required=True)
    p.add_argument("--pw")
    p.add_argument("--encrypt", action="store_true")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("publish")
    p.add_argument("hash")
    p.add_argument("--url", required=True)
    p.set_defaults(func=_cmd_publish)

    p = sub.add_parser("share")
    p.add_argument("hash")
    p.add_argument("--peer", required=True)
    p.add_argument("--url", required=True)
    p.add_argument("--pw", required=True)
    p.set_defaults(func=_cmd_share)

    p = sub.add_parser("withdraw")
    p.add_argument("hash")
    p.set_defaults(func=_cmd_withdraw)

    p = sub.add_parser("status")
    p.add_argument("hash")
    p.set_defaults(func=_cmd_status)

    p = sub.add_parser("query")
    p.add_argument("what", choices=["cert", "vps"])
    p.add_argument("key", help="data hash (cert) or address (vps)")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("chain")
    p.add_argument("action", choices=["verify", "export"])
    p.add_argument("--out")
    p.set_defaults(func=_cmd_chain)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = args.func(args)
    except (ContractError, LedgerError, DataStoreError, codeexec.CodeExecError) as exc:
        _emit({"ok": False, "error": type(exc).__name__, "message": str(exc)})
        return 1
    if args.export_chain:
        Path(args.export_chain).write_text(Ledger.load(args.chain).export_json())
    _emit(out)
    return 0


def notary_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="movsc-notary", description="Notary daemon")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run")
    _common(p)
    p.add_argument("--poll-ms", type=int, default=2000)
    p.add_argument("--timeout", type=float, default=codeexec.DEFAULT_TIMEOUT)
    p.add_argument("--dishonest", choices=["validate-blind", "invalidate-on-purpose"])
    p.add_argument("--simulation", action="store_true", default=os.environ.get("MOVSC_SIMULATION") == "1")
    p.add_argument("--audit-log", help="newline-delimited JSON audit log")
    p.add_argument("--max-packages", type=int, help="exit after handling this many packages")
    p.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)

    if args.dishonest and not args.simulation:
        print("movsc-notary: --dishonest requires --simulation", file=sys.stderr)
        return 2
    iface = _interface(args)
    daemon = NotaryDaemon(
        iface,
        Resolver(),
        poll_interval=args.poll_ms / 1000,
        timeout=args.timeout,
        dishonest=args.dishonest,
        simulation=args.simulation,
        audit_log=AuditLog(args.audit_log),
        workers=args.workers,
    )
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    handled = daemon.run_loop(stop, args.max_packages)
    _emit({"ok": True, "handled": handled})
    return 0


def sim_main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="movsc-sim", description="Scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario file (or builtin name)")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--export-trace", metavar="OUT")
    p.add_argument("--export-chain", metavar="OUT")
    p = sub.add_parser("suite", help="run every builtin scenario")
    p.add_argument("--seed", type=int)
    args = parser.parse_args(argv)

    if args.command == "suite":
        ok = True
        for name in BUILTIN_SUITE:
            report = run_scenario(Scenario.builtin(name), args.seed)
            print(report.summary())
            ok &= report.passed
        return 0 if ok else 1

    try:
        if Path(args.scenario).exists():
            scenario = Scenario.load(args.scenario)
        else:
            scenario = Scenario.builtin(args.scenario)
    except (ScenarioError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"movsc-sim: cannot load scenario: {exc}", file=sys.stderr)
        return 2
    report = run_scenario(scenario, args.seed)
    print(report.summary())
    if args.export_trace:
        Path(args.export_trace).write_text(report.trace_json())
    if args.export_chain:
        Path(args.export_chain).write_text(report.ledger.export_json())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
