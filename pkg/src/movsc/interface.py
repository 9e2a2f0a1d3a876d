"""Access-node interface: signs contract calls on behalf of one identity.

Clients reach the contract through a neutral node rather than through
their notary, so this object holds nothing but the caller's identity and
a handle on the ledger.
"""

from __future__ import annotations

import copy
import threading
from typing import Any

from .contract import Certificate, CodeEntry, NotaryEntry, ValidatorPackage
from .identity import Identity
from .ledger import Ledger, Receipt, Transaction


class ContractInterface:
    def __init__(self, ledger: Ledger, identity: Identity):
        self.ledger = ledger
        self.identity = identity
        self._lock = threading.Lock()

    @property
    def address(self) -> bytes:
        return self.identity.address

    def call(self, op: str, **args: Any) -> Receipt:
        with self._lock:
            self.ledger.refresh()
            nonce = self.ledger.next_nonce(self.address)
            return self.ledger.submit(Transaction.create(self.identity, nonce, op, args))

    def register(self) -> bytes:
        return self.ledger.register_identity(self.identity)

    # mutating calls

    def register_code(self, code_id: str, kind: str, source: str, integrity_hash: bytes) -> Receipt:
        return self.call(
            "register_code", code_id=code_id, kind=kind, source=source, integrity_hash=integrity_hash
        )

    def register_notary(self) -> Receipt:
        return self.call("register_notary")

    def send_data_hash(self, data_hash: bytes, code_id: str, secret_hash: bytes) -> Receipt:
        return self.call("send_data_hash", data_hash=data_hash, code_id=code_id, secret_hash=secret_hash)

    def request_validation(
        self,
        notary_id: bytes,
        data_hash: bytes,
        data_url: bytes,
        data_pw: bytes,
        encrypted: bool,
        secret: bytes,
        new_secret_hash: bytes,
        code_id: str | None = None,
    ) -> Receipt:
        return self.call(
            "request_validation", notary_id=notary_id, data_hash=data_hash, data_url=data_url,
            data_pw=data_pw, encrypted=encrypted, secret=secret,
            new_secret_hash=new_secret_hash, code_id=code_id,
        )

    def share_privately(
        self,
        peer_id: bytes,
        data_hash: bytes,
        data_url: bytes,
        data_pw: bytes,
        encrypted: bool,
        secret: bytes,
        new_secret_hash: bytes,
        code_id: str | None = None,
    ) -> Receipt:
        return self.call(
            "share_privately", peer_id=peer_id, data_hash=data_hash, data_url=data_url,
            data_pw=data_pw, encrypted=encrypted, secret=secret,
            new_secret_hash=new_secret_hash, code_id=code_id,
        )

    def accept_vp(self, data_hash: bytes) -> Receipt:
        return self.call("accept_vp", data_hash=data_hash)

    def send_notary_result(self, data_hash: bytes, n_result: bytes) -> Receipt:
        return self.call("send_notary_result", data_hash=data_hash, n_result=n_result)

    def publish(self, data_hash: bytes, data_url: bytes, secret: bytes, new_secret_hash: bytes) -> Receipt:
        return self.call(
            "publish", data_hash=data_hash, data_url=data_url, secret=secret,
            new_secret_hash=new_secret_hash,
        )

    def confirm_publication(self, data_hash: bytes, n_result: bytes) -> Receipt:
        return self.call("confirm_publication", data_hash=data_hash, n_result=n_result)

    def withdraw(self, data_hash: bytes, secret: bytes, new_secret_hash: bytes) -> Receipt:
        return self.call("withdraw", data_hash=data_hash, secret=secret, new_secret_hash=new_secret_hash)

    # reads

    def get_code(self, code_id: str) -> CodeEntry:
        return self.ledger.view(lambda c: c.get_code(code_id))

    request_code = get_code

    def get_pkey(self, address: bytes) -> bytes:
        return self.ledger.get_public_key(address)

    def get_vp(self, recipient: bytes | None = None) -> ValidatorPackage | None:
        recipient = self.address if recipient is None else recipient
        return self.ledger.view(lambda c: copy.deepcopy(c.get_vp(recipient)))

    def get_public_vps(self) -> list[ValidatorPackage]:
        return self.ledger.view(lambda c: copy.deepcopy(c.get_public_vps()))

    def get_certificate(self, data_hash: bytes) -> Certificate:
        return self.ledger.view(lambda c: copy.deepcopy(c.get_certificate(data_hash)))

    def list_notaries(self) -> list[NotaryEntry]:
        return self.ledger.view(lambda c: c.list_notaries())

    def list_codes(self) -> list[str]:
        return self.ledger.view(lambda c: c.list_codes())
