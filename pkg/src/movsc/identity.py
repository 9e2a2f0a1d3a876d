"""Actor identities: signing keypair, encryption keypair, ledger address."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from . import crypto

ADDRESS_SIZE = 20


class Role(str, Enum):
    CLIENT = "client"
    NOTARY = "notary"
    PEER = "peer"


def derive_address(sign_pubkey: bytes) -> bytes:
    """Last 20 bytes of SHA-256 over the raw Ed25519 public key."""
    return crypto.sha256(sign_pubkey)[-ADDRESS_SIZE:]


@dataclass(frozen=True)
class PublicIdentity:
    """What the ledger's key directory knows about an actor."""

    address: bytes
    sign_pubkey: bytes
    enc_pubkey: bytes
    role: Role

    def to_obj(self) -> dict:
        return {
            "address": self.address,
            "sign_pubkey": self.sign_pubkey,
            "enc_pubkey": self.enc_pubkey,
            "role": self.role.value,
        }


@dataclass(frozen=True, eq=False)
class Identity:
    sign_key: Ed25519PrivateKey
    enc_key: X25519PrivateKey
    role: Role

    @classmethod
    def generate(cls, role: Role | str, rng: crypto.Rng | None = None) -> "Identity":
        return cls(crypto.new_signing_key(rng), crypto.new_enc_key(rng), Role(role))

    @property
    def sign_pubkey(self) -> bytes:
        return crypto.public_bytes(self.sign_key)

    @property
    def enc_pubkey(self) -> bytes:
        return crypto.public_bytes(self.enc_key)

    @property
    def address(self) -> bytes:
        return derive_address(self.sign_pubkey)

    def public(self) -> PublicIdentity:
        return PublicIdentity(self.address, self.sign_pubkey, self.enc_pubkey, self.role)

    def sign(self, message: bytes) -> bytes:
        return crypto.sign(message, self.sign_key)

    def to_json(self) -> dict:
        return {
            "role": self.role.value,
            "address": self.address.hex(),
            "sign_key": crypto.private_bytes(self.sign_key).hex(),
            "enc_key": crypto.private_bytes(self.enc_key).hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Identity":
        return cls(
            crypto.signing_key_from_seed(bytes.fromhex(obj["sign_key"])),
            crypto.enc_key_from_seed(bytes.fromhex(obj["enc_key"])),
            Role(obj["role"]),
        )

    def save(self, path: str | Path) -> None:
        # private keys: owner-only from the moment the file exists
        fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            fh.write(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Identity":
        return cls.from_json(json.loads(Path(path).read_text()))
