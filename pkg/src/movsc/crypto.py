"""Hashing, secret commitments, signatures and sealed envelopes.

Digests are always 32 bytes.  ``"KECCAK256"`` is the original Keccak
padding used by Ethereum, *not* FIPS-202 SHA3-256 (exposed separately as
``"SHA3_256"``).

Every function that needs randomness takes an optional ``rng`` callable
``rng(n) -> bytes``; it defaults to :func:`os.urandom`.  Simulations pass
a seeded source so that whole runs are reproducible.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import BinaryIO, Callable, Iterable, Union

from Crypto.Hash import keccak as _keccak
from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .encoding import DecodeError, decode, encode

Rng = Callable[[int], bytes]
ByteSource = Union[bytes, bytearray, memoryview, BinaryIO, Iterable[bytes]]

DIGEST_SIZE = 32
SECRET_SIZE = 32
CHUNK_SIZE = 1 << 16
SUPPORTED = ("SHA256", "KECCAK256", "SHA3_256")

_ENVELOPE_INFO = b"movsc-envelope-v1"
_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw
_RAW_PRIV = serialization.PrivateFormat.Raw
_NO_ENC = serialization.NoEncryption()


class CryptoError(Exception):
    pass


class UnsupportedAlgorithm(CryptoError):
    pass


class DecryptFailure(CryptoError):
    pass


class EntropyUnavailable(CryptoError):
    pass


class _Keccak256:
    def __init__(self) -> None:
        self._h = _keccak.new(digest_bits=256)

    def update(self, data: bytes) -> None:
        self._h.update(data)

    def digest(self) -> bytes:
        return self._h.digest()


def new_hasher(code_id: str):
    """Return a fresh incremental hasher with ``update``/``digest``."""
    if code_id == "SHA256":
        return hashlib.sha256()
    if code_id == "KECCAK256":
        return _Keccak256()
    if code_id == "SHA3_256":
        return hashlib.sha3_256()
    raise UnsupportedAlgorithm(code_id)


def iter_chunks(data: ByteSource, chunk_size: int = CHUNK_SIZE) -> Iterable[bytes]:
    """Yield ``data`` in chunks without materializing streams in memory."""
    if isinstance(data, (bytes, bytearray, memoryview)):
        view = memoryview(data)
        for start in range(0, len(view), chunk_size):
            yield bytes(view[start : start + chunk_size])
    elif hasattr(data, "read"):
        while True:
            chunk = data.read(chunk_size)
            if not chunk:
                break
            yield chunk
    else:
        for chunk in data:
            yield bytes(chunk)


def hash(code_id: str, data: ByteSource) -> bytes:  # noqa: A001
    hasher = new_hasher(code_id)
    for chunk in iter_chunks(data):
        hasher.update(chunk)
    return hasher.digest()


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def keccak256(data: bytes) -> bytes:
    return _keccak.new(digest_bits=256, data=bytes(data)).digest()


def random_bytes(n: int, rng: Rng | None = None) -> bytes:
    try:
        out = (rng or os.urandom)(n)
    except NotImplementedError as exc:  # os.urandom without an entropy source
        raise EntropyUnavailable(str(exc)) from exc
    if len(out) != n:
        raise EntropyUnavailable(f"requested {n} random bytes, got {len(out)}")
    return out


@dataclass(frozen=True)
class Secret:
    preimage: bytes
    commitment: bytes

    def __post_init__(self) -> None:
        if commit(self.preimage) != self.commitment:
            raise ValueError("commitment does not match preimage")


def commit(preimage: bytes) -> bytes:
    return sha256(preimage)


def generate_secret(rng: Rng | None = None) -> Secret:
    preimage = random_bytes(SECRET_SIZE, rng)
    return Secret(preimage, commit(preimage))


# -- signatures (Ed25519) ---------------------------------------------------


def signing_key_from_seed(seed: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(seed)


def new_signing_key(rng: Rng | None = None) -> Ed25519PrivateKey:
    return signing_key_from_seed(random_bytes(32, rng))


def public_bytes(key: Ed25519PrivateKey | X25519PrivateKey) -> bytes:
    return key.public_key().public_bytes(_RAW, _RAW_PUB)


def private_bytes(key: Ed25519PrivateKey | X25519PrivateKey) -> bytes:
    return key.private_bytes(_RAW, _RAW_PRIV, _NO_ENC)


def sign(message: bytes, signing_key: Ed25519PrivateKey) -> bytes:
    return signing_key.sign(message)


def verify(message: bytes, signature: bytes, pubkey: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(pubkey).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


# -- hybrid encryption (X25519 + HKDF-SHA256 + ChaCha20-Poly1305) ------------


def enc_key_from_seed(seed: bytes) -> X25519PrivateKey:
    return X25519PrivateKey.from_private_bytes(seed)


def new_enc_key(rng: Rng | None = None) -> X25519PrivateKey:
    return enc_key_from_seed(random_bytes(32, rng))


@dataclass(frozen=True)
class Envelope:
    ephemeral_pubkey: bytes
    nonce: bytes
    ciphertext: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return encode(
            {
                "epk": self.ephemeral_pubkey,
                "nonce": self.nonce,
                "ct": self.ciphertext,
                "tag": self.tag,
            }
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        try:
            obj = decode(data)
            return cls(obj["epk"], obj["nonce"], obj["ct"], obj["tag"])
        except (DecodeError, KeyError, TypeError) as exc:
            raise DecryptFailure("malformed envelope") from exc


def _derive_key(shared: bytes, epk: bytes, recipient_pub: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=epk + recipient_pub,
        info=_ENVELOPE_INFO,
    ).derive(shared)


def encrypt(plaintext: bytes, recipient_pubkey: bytes, rng: Rng | None = None) -> Envelope:
    recipient = X25519PublicKey.from_public_bytes(recipient_pubkey)
    ephemeral = new_enc_key(rng)
    epk = public_bytes(ephemeral)
    key = _derive_key(ephemeral.exchange(recipient), epk, recipient_pubkey)
    nonce = random_bytes(12, rng)
    sealed = ChaCha20Poly1305(key).encrypt(nonce, bytes(plaintext), epk)
    return Envelope(epk, nonce, sealed[:-16], sealed[-16:])


def decrypt(envelope: Envelope | bytes, secret_key: X25519PrivateKey) -> bytes:
    if not isinstance(envelope, Envelope):
        envelope = Envelope.from_bytes(envelope)
    try:
        peer = X25519PublicKey.from_public_bytes(envelope.ephemeral_pubkey)
        shared = secret_key.exchange(peer)
        key = _derive_key(shared, envelope.ephemeral_pubkey, public_bytes(secret_key))
        return ChaCha20Poly1305(key).decrypt(
            envelope.nonce, envelope.ciphertext + envelope.tag, envelope.ephemeral_pubkey
        )
    except (InvalidTag, ValueError) as exc:
        raise DecryptFailure("envelope does not open with this key") from exc
