"""Client agent: certify data and drive the rest of its lifecycle.

Every lifecycle step after certification reveals the current secret
preimage and installs a fresh commitment in the same contract call.  The
local :class:`SecretStore` is updated only after the call succeeded, so it
always holds the preimage whose hash is on chain.
"""

from __future__ import annotations

import fcntl
import json
import os
import tempfile
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterator

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from . import codeexec, crypto
from .contract import Certificate, ContractError, UnknownNotary, UnknownPeer, WrongSecret
from .interface import ContractInterface
from .ledger import Receipt, UnknownAddress


class WrongPassphrase(Exception):
    pass


class SecretStore:
    """Map of data hash -> current secret preimage.

    With ``path`` the map is kept in a file encrypted under ``passphrase``
    (scrypt + ChaCha20-Poly1305) and every update takes an exclusive lock,
    so two processes cannot race a rotation.  Without ``path`` it lives in
    memory.  Losing the file means losing control of the certificates.
    """

    SCRYPT_N = 2**14

    def __init__(self, path: str | Path | None = None, passphrase: str | None = None):
        self.path = Path(path) if path is not None else None
        if self.path is not None and not passphrase:
            raise ValueError("an on-disk secret store needs a passphrase")
        self._passphrase = (passphrase or "").encode("utf-8")
        self._memory: dict[bytes, bytes] = {}
        self._lock = threading.Lock()

    def _key(self, salt: bytes) -> bytes:
        return Scrypt(salt=salt, length=32, n=self.SCRYPT_N, r=8, p=1).derive(self._passphrase)

    def _read(self) -> dict[bytes, bytes]:
        if self.path is None:
            return dict(self._memory)
        if not self.path.exists() or self.path.stat().st_size == 0:
            return {}
        blob = json.loads(self.path.read_text())
        salt, nonce = bytes.fromhex(blob["salt"]), bytes.fromhex(blob["nonce"])
        try:
            plain = ChaCha20Poly1305(self._key(salt)).decrypt(nonce, bytes.fromhex(blob["ciphertext"]), salt)
        except InvalidTag as exc:
            raise WrongPassphrase(str(self.path)) from exc
        return {bytes.fromhex(k): bytes.fromhex(v) for k, v in json.loads(plain).items()}

    def _write(self, secrets: dict[bytes, bytes]) -> None:
        if self.path is None:
            self._memory = dict(secrets)
            return
        salt, nonce = os.urandom(16), os.urandom(12)
        plain = json.dumps({k.hex(): v.hex() for k, v in sorted(secrets.items())}).encode()
        blob = {
            "kdf": "scrypt",
            "salt": salt.hex(),
            "nonce": nonce.hex(),
            "ciphertext": ChaCha20Poly1305(self._key(salt)).encrypt(nonce, plain, salt).hex(),
        }
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name + ".")
        with os.fdopen(fd, "w") as fh:
            json.dump(blob, fh)
        os.replace(tmp, self.path)

    @contextmanager
    def _locked(self) -> Iterator[None]:
        with self._lock:
            if self.path is None:
                yield
                return
            with open(str(self.path) + ".lock", "a") as lock_fh:
                fcntl.flock(lock_fh, fcntl.LOCK_EX)
                try:
                    yield
                finally:
                    fcntl.flock(lock_fh, fcntl.LOCK_UN)

    def get(self, data_hash: bytes) -> bytes | None:
        with self._locked():
            return self._read().get(data_hash)

    def set(self, data_hash: bytes, preimage: bytes) -> None:
        with self._locked():
            secrets = self._read()
            secrets[data_hash] = preimage
            self._write(secrets)

    def delete(self, data_hash: bytes) -> None:
        with self._locked():
            secrets = self._read()
            if secrets.pop(data_hash, None) is not None:
                self._write(secrets)

    def items(self) -> dict[bytes, bytes]:
        with self._locked():
            return self._read()


def _open_source(data):
    if isinstance(data, (str, os.PathLike)):
        return open(data, "rb")
    return None


class ClientSession:
    def __init__(
        self,
        iface: ContractInterface,
        store: SecretStore | None = None,
        rng: crypto.Rng | None = None,
        fetch: codeexec.Fetcher | None = None,
        timeout: float | None = None,
    ):
        self.iface = iface
        self.store = store if store is not None else SecretStore()
        self.rng = rng
        self.fetch = fetch
        self.timeout = timeout

    @property
    def identity(self):
        return self.iface.identity

    @staticmethod
    def _check(receipt: Receipt) -> Receipt:
        if receipt.error is not None:
            receipt.error.receipt = receipt
            raise receipt.error
        return receipt

    def compute_hash(self, data, code_id: str = "SHA256") -> bytes:
        """Run the on-chain program for ``code_id`` over ``data`` locally."""
        program = codeexec.materialize(self.iface.get_code(code_id), self.fetch)
        fh = _open_source(data)
        if fh is None:
            return codeexec.execute(program, data, self.timeout)
        with fh:
            return codeexec.execute(program, fh, self.timeout)

    def certify_data(self, data, code_id: str = "SHA256") -> tuple[bytes, Receipt]:
        """Hash ``data`` (bytes, stream or path) with registered code and certify it."""
        data_hash = self.compute_hash(data, code_id)
        return data_hash, self.certify_digest(data_hash, code_id)

    def certify_digest(self, data_hash: bytes, code_id: str = "SHA256") -> Receipt:
        """Certify an already computed digest (no local recomputation)."""
        secret = crypto.generate_secret(self.rng)
        receipt = self._check(self.iface.send_data_hash(data_hash, code_id, secret.commitment))
        self.store.set(data_hash, secret.preimage)
        return receipt

    def _rotate(self, data_hash: bytes, call: Callable[[bytes, bytes], Receipt]) -> Receipt:
        preimage = self.store.get(data_hash)
        if preimage is None:
            raise WrongSecret(f"no local secret for {data_hash.hex()}")
        fresh = crypto.generate_secret(self.rng)
        receipt = self._check(call(preimage, fresh.commitment))
        self.store.set(data_hash, fresh.preimage)
        return receipt

    def _seal_for(self, recipient: bytes, missing: type[ContractError], *fields: bytes) -> list[bytes]:
        try:
            pubkey = self.iface.get_pkey(recipient)
        except UnknownAddress as exc:
            raise missing(recipient.hex()) from exc
        return [crypto.encrypt(f, pubkey, self.rng).to_bytes() for f in fields]

    def initiate_data_validation(
        self,
        data_hash: bytes,
        notary_id: bytes,
        data_url: str | bytes,
        data_pw: bytes = b"",
        encrypted: bool = True,
        code_id: str | None = None,
    ) -> Receipt:
        url = data_url.encode() if isinstance(data_url, str) else bytes(data_url)
        pw = bytes(data_pw)
        if encrypted:
            url, pw = self._seal_for(notary_id, UnknownNotary, url, pw)
        return self._rotate(
            data_hash,
            lambda secret, new: self.iface.request_validation(
                notary_id, data_hash, url, pw, encrypted, secret, new, code_id
            ),
        )

    def publish_data(self, data_hash: bytes, public_url: str | bytes) -> Receipt:
        url = public_url.encode() if isinstance(public_url, str) else bytes(public_url)
        return self._rotate(
            data_hash, lambda secret, new: self.iface.publish(data_hash, url, secret, new)
        )

    def share_privately(
        self, data_hash: bytes, peer_id: bytes, data_url: str | bytes, data_pw: bytes
    ) -> Receipt:
        url = data_url.encode() if isinstance(data_url, str) else bytes(data_url)
        url, pw = self._seal_for(peer_id, UnknownPeer, url, bytes(data_pw))
        return self._rotate(
            data_hash,
            lambda secret, new: self.iface.share_privately(peer_id, data_hash, url, pw, True, secret, new),
        )

    def withdraw_result(self, data_hash: bytes) -> Receipt:
        # The rotated preimage is kept: it still proves ownership of the
        # withdrawn record (a repeat withdrawal reports AlreadyWithdrawn).
        return self._rotate(
            data_hash, lambda secret, new: self.iface.withdraw(data_hash, secret, new)
        )

    def status(self, data_hash: bytes) -> Certificate:
        return self.iface.get_certificate(data_hash)
