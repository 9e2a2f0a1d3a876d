"""Notary daemon: pick up validator packages addressed to us and answer them.

Per package: decrypt the data reference (if encrypted), accept the package
(the contract hands back the code to run), fetch the data, execute the code
and report the digest.  Infrastructure failures (decryption, fetch, timeout)
are logged and *not* reported, so they never burn one of the client's
retries; only a genuine digest mismatch does.

Peers receiving privately shared data run the same loop.
"""

from __future__ import annotations

import copy
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Callable

from . import codeexec, crypto
from .contract import ValidatorPackage
from .datastore import DataStoreError
from .interface import ContractInterface
from .ledger import Receipt

Retriever = Callable[[bytes, bytes], BinaryIO]


class Outcome(str, Enum):
    MATCHED = "matched"
    MISMATCHED = "mismatched"
    FAILED = "failed"


class DishonestMode(str, Enum):
    VALIDATE_BLIND = "validate-blind"
    INVALIDATE_ON_PURPOSE = "invalidate-on-purpose"


@dataclass(frozen=True)
class ProcessingOutcome:
    outcome: Outcome
    package_id: int
    data_hash: bytes
    digest: bytes | None = None
    sent: bytes | None = None
    reason: str | None = None


class AuditLog:
    """Append-only record of package handling; optionally mirrored to NDJSON."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with self.path.open("a") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")


class NotaryDaemon:
    def __init__(
        self,
        iface: ContractInterface,
        retrieve: Retriever,
        fetch: codeexec.Fetcher | None = None,
        poll_interval: float = 2.0,
        timeout: float | None = None,
        dishonest: DishonestMode | str | None = None,
        simulation: bool = False,
        audit_log: AuditLog | None = None,
        workers: int = 1,
    ):
        if dishonest is not None and not simulation:
            raise ValueError("dishonest modes only run in simulation mode")
        self.iface = iface
        self.retrieve = retrieve
        self.fetch = fetch
        self.poll_interval = poll_interval
        self.timeout = timeout
        self.dishonest = DishonestMode(dishonest) if dishonest is not None else None
        self.audit = audit_log if audit_log is not None else AuditLog()
        self.workers = workers
        self._wake = threading.Event()
        self._in_flight: set[int] = set()
        # packages we could not open; they stay on chain but are not retried
        self._declined: set[int] = set()
        self._in_flight_lock = threading.Lock()

    @property
    def address(self) -> bytes:
        return self.iface.address

    def _log(self, vp: ValidatorPackage, action: str, result: ProcessingOutcome) -> ProcessingOutcome:
        self.audit.append(
            {
                "time": self.iface.ledger.blocks[-1].timestamp,
                "notary": self.address.hex(),
                "package_id": vp.package_id,
                "kind": vp.kind.value,
                "data_hash": vp.data_hash.hex(),
                "code_id": vp.code_id,
                "action": action,
                "outcome": result.outcome.value,
                "digest": None if result.digest is None else result.digest.hex(),
                "sent": None if result.sent is None else result.sent.hex(),
                "reason": result.reason,
                "dishonest": None if self.dishonest is None else self.dishonest.value,
            }
        )
        return result

    def _fail(self, vp: ValidatorPackage, action: str, reason: str, digest: bytes | None = None):
        return self._log(
            vp, action, ProcessingOutcome(Outcome.FAILED, vp.package_id, vp.data_hash, digest, None, reason)
        )

    def process_one(self, vp: ValidatorPackage) -> ProcessingOutcome:
        url, pw = vp.data_url, vp.data_pw
        if vp.encrypted:
            try:
                url = crypto.decrypt(url, self.iface.identity.enc_key)
                pw = crypto.decrypt(pw, self.iface.identity.enc_key)
            except crypto.DecryptFailure as exc:
                self._declined.add(vp.package_id)
                return self._fail(vp, "decrypt", f"DecryptFailure: {exc}")

        receipt = self.iface.accept_vp(vp.data_hash)
        if not receipt.ok:
            self._declined.add(vp.package_id)
            return self._fail(vp, "accept", receipt.error.code)
        try:
            program = codeexec.materialize(receipt.result, self.fetch)
        except codeexec.CodeExecError as exc:
            return self._fail(vp, "materialize", f"{type(exc).__name__}: {exc}")

        digest = None
        if self.dishonest is DishonestMode.VALIDATE_BLIND:
            sent = vp.data_hash
        else:
            try:
                stream = self.retrieve(url, pw)
                try:
                    digest = codeexec.execute(program, stream, self.timeout)
                finally:
                    close = getattr(stream, "close", None)
                    if close is not None:
                        close()
            except DataStoreError as exc:
                return self._fail(vp, "retrieve", f"{type(exc).__name__}: {exc}")
            except codeexec.ExecutionTimeout as exc:
                return self._fail(vp, "execute", f"ExecutionTimeout: {exc}")
            sent = digest
            if self.dishonest is DishonestMode.INVALIDATE_ON_PURPOSE:
                sent = bytes([digest[0] ^ 0xFF]) + digest[1:]

        receipt = self.iface.send_notary_result(vp.data_hash, sent)
        if not receipt.ok:
            return self._fail(vp, "report", receipt.error.code, digest)
        outcome = Outcome.MATCHED if receipt.result else Outcome.MISMATCHED
        return self._log(
            vp, "report", ProcessingOutcome(outcome, vp.package_id, vp.data_hash, digest, sent)
        )

    def pending(self) -> list[ValidatorPackage]:
        me = self.address
        return self.iface.ledger.view(
            lambda c: [
                copy.deepcopy(vp)
                for vp in c.packages
                if vp.recipient == me and vp.is_open and not vp.accepted
                and vp.package_id not in self._declined
            ]
        )

    def poll_once(self) -> ProcessingOutcome | None:
        self.iface.ledger.refresh()
        waiting = self.pending()
        return self.process_one(waiting[0]) if waiting else None

    def drain(self) -> list[ProcessingOutcome]:
        """Process every package currently waiting for us, oldest first."""
        results = []
        while (result := self.poll_once()) is not None:
            results.append(result)
        return results

    def _claim(self, vp: ValidatorPackage) -> bool:
        with self._in_flight_lock:
            if vp.package_id in self._in_flight:
                return False
            self._in_flight.add(vp.package_id)
            return True

    def _process_claimed(self, vp: ValidatorPackage) -> ProcessingOutcome:
        try:
            return self.process_one(vp)
        finally:
            with self._in_flight_lock:
                self._in_flight.discard(vp.package_id)

    def run_loop(self, stop: threading.Event, max_packages: int | None = None) -> int:
        """Listen for packages until ``stop`` is set; returns how many were handled."""
        self.iface.ledger.subscribe(lambda _block: self._wake.set())
        handled = 0
        with ThreadPoolExecutor(max_workers=max(1, self.workers)) as pool:
            while not stop.is_set():
                self._wake.clear()
                self.iface.ledger.refresh()
                batch = [vp for vp in self.pending() if self._claim(vp)]
                if max_packages is not None:
                    batch = batch[: max_packages - handled]
                if self.workers <= 1:
                    for vp in batch:
                        self._process_claimed(vp)
                else:
                    list(pool.map(self._process_claimed, batch))
                handled += len(batch)
                if max_packages is not None and handled >= max_packages:
                    break
                self._wake.wait(self.poll_interval)
        return handled


PeerVerifier = NotaryDaemon


def confirm_publication(
    iface: ContractInterface,
    data_hash: bytes,
    retrieve: Retriever,
    fetch: codeexec.Fetcher | None = None,
    timeout: float | None = None,
) -> tuple[bytes, Receipt]:
    """Recompute a published certificate from its public data and report it."""
    cert = iface.get_certificate(data_hash)
    vp = cert.public_vp
    code = iface.get_code(cert.code_id if vp is None else vp.code_id)
    program = codeexec.materialize(code, fetch)
    digest = None
    if vp is not None and not vp.voided:
        with retrieve(vp.data_url, b"") as stream:
            digest = codeexec.execute(program, stream, timeout)
    receipt = iface.confirm_publication(data_hash, digest if digest is not None else b"")
    return digest, receipt
