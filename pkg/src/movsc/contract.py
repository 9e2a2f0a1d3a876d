"""The moving smart contract: a deterministic state machine.

State: a code registry, a notary registry, a certificate table keyed by
data hash, and the validator packages created for certificates.  The only
way to mutate state is :meth:`MovingContract.apply`, which the ledger calls
once per recorded transaction with the authenticated sender and the block
time.  All precondition checks of an operation run before its first write,
so a failing call leaves the state untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping

from . import crypto
from .encoding import encode
from .identity import ADDRESS_SIZE, PublicIdentity, Role

MAX_RETRIES = 3

_ZERO_HASH = bytes(32)
_EMPTY_COMMITMENT = crypto.sha256(b"")


# -- errors -----------------------------------------------------------------


class ContractError(Exception):
    """A reverted contract call.  The transaction is still recorded."""

    @property
    def code(self) -> str:
        return type(self).__name__


class AlreadyCertified(ContractError):
    pass


class NotCertified(ContractError):
    pass


class WrongSecret(ContractError):
    pass


class UnknownCodeId(ContractError):
    pass


class DuplicateCodeId(ContractError):
    pass


class IntegrityMismatch(ContractError):
    pass


class NotANotaryIdentity(ContractError):
    pass


class DuplicateNotary(ContractError):
    pass


class UnknownNotary(ContractError):
    pass


class UnknownPeer(ContractError):
    pass


class Withdrawn(ContractError):
    pass


class AlreadyWithdrawn(ContractError):
    pass


class RetryLimitExceeded(ContractError):
    pass


class NotRequestedNotary(ContractError):
    pass


class NotAccepted(ContractError):
    pass


class NoPublicPackage(ContractError):
    pass


ERROR_TYPES: dict[str, type[ContractError]] = {
    cls.__name__: cls for cls in ContractError.__subclasses__()
}


class MalformedCall(ValueError):
    """Unknown operation or badly typed arguments; rejected before recording."""


# -- domain types -----------------------------------------------------------


class Status(str, Enum):
    CERTIFIED = "certified"
    VALIDATED = "validated"
    SHARED = "shared"
    PUBLISHED = "published"
    WITHDRAWN = "withdrawn"


# Status only ever moves up this ladder; WITHDRAWN is terminal and handled apart.
_RANK = {Status.CERTIFIED: 0, Status.VALIDATED: 1, Status.SHARED: 2, Status.PUBLISHED: 3}


class PackageKind(str, Enum):
    VALIDATION = "validation"
    SHARE = "share"
    PUBLIC = "public"


class CodeKind(str, Enum):
    INLINE = "inline_source"
    EXTERNAL = "external"


@dataclass(frozen=True)
class CodeEntry:
    code_id: str
    kind: CodeKind
    source: str
    integrity_hash: bytes

    def to_obj(self) -> dict:
        return {
            "code_id": self.code_id,
            "kind": self.kind.value,
            "source": self.source,
            "integrity_hash": self.integrity_hash,
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "CodeEntry":
        return cls(obj["code_id"], CodeKind(obj["kind"]), obj["source"], obj["integrity_hash"])


@dataclass(frozen=True)
class NotaryEntry:
    notary_id: bytes
    enc_pubkey: bytes
    active: bool = True

    def to_obj(self) -> dict:
        return {"notary_id": self.notary_id, "enc_pubkey": self.enc_pubkey, "active": self.active}


@dataclass
class ValidatorPackage:
    package_id: int
    kind: PackageKind
    recipient: bytes | None
    data_hash: bytes
    code_id: str
    data_url: bytes
    data_pw: bytes
    encrypted: bool
    created_at: int
    accepted: bool = False
    validated: bool = False
    timestamp: int | None = None
    attempts: int = 0
    closed: bool = False
    voided: bool = False

    @property
    def is_public(self) -> bool:
        return self.recipient is None

    @property
    def is_open(self) -> bool:
        return not (self.closed or self.voided)

    def to_obj(self) -> dict:
        return {
            "package_id": self.package_id,
            "kind": self.kind.value,
            "recipient": self.recipient,
            "data_hash": self.data_hash,
            "code_id": self.code_id,
            "data_url": self.data_url,
            "data_pw": self.data_pw,
            "encrypted": self.encrypted,
            "created_at": self.created_at,
            "accepted": self.accepted,
            "validated": self.validated,
            "timestamp": self.timestamp,
            "attempts": self.attempts,
            "closed": self.closed,
            "voided": self.voided,
        }

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "ValidatorPackage":
        return cls(**{**obj, "kind": PackageKind(obj["kind"])})


@dataclass
class Certificate:
    data_hash: bytes
    timestamp: int
    secret_hash: bytes
    code_id: str
    owner: bytes
    used_code: str
    status: Status = Status.CERTIFIED
    validator_address: bytes | None = None
    vp: ValidatorPackage | None = None
    public_vp: ValidatorPackage | None = None
    attempts: int = 0
    withdrawn_at: int | None = None

    def to_obj(self) -> dict:
        return {
            "data_hash": self.data_hash,
            "timestamp": self.timestamp,
            "secret_hash": self.secret_hash,
            "code_id": self.code_id,
            "owner": self.owner,
            "used_code": self.used_code,
            "status": self.status.value,
            "validator_address": self.validator_address,
            "vp_id": None if self.vp is None else self.vp.package_id,
            "public_vp_id": None if self.public_vp is None else self.public_vp.package_id,
            "attempts": self.attempts,
            "withdrawn_at": self.withdrawn_at,
        }


@dataclass(frozen=True)
class CallContext:
    sender: bytes
    time: int
    directory: Mapping[bytes, PublicIdentity]


# -- call schemas -----------------------------------------------------------


def _hash32(v: Any) -> bool:
    return isinstance(v, bytes) and len(v) == 32


def _commitment(v: Any) -> bool:
    return _hash32(v) and v not in (_ZERO_HASH, _EMPTY_COMMITMENT)


def _address(v: Any) -> bool:
    return isinstance(v, bytes) and len(v) == ADDRESS_SIZE


def _bytes(v: Any) -> bool:
    return isinstance(v, bytes)


def _str(v: Any) -> bool:
    return isinstance(v, str) and 0 < len(v) <= 256


def _opt_str(v: Any) -> bool:
    return v is None or _str(v)


def _bool(v: Any) -> bool:
    return isinstance(v, bool)


def _code_kind(v: Any) -> bool:
    return v in {k.value for k in CodeKind}


def _source(v: Any) -> bool:
    return isinstance(v, str)


_SECRET_ARGS = {"secret": _bytes, "new_secret_hash": _commitment}
_PACKAGE_ARGS = {
    "data_hash": _hash32,
    "data_url": _bytes,
    "data_pw": _bytes,
    "encrypted": _bool,
    "code_id": _opt_str,
    **_SECRET_ARGS,
}

CALL_SCHEMAS: dict[str, dict[str, Callable[[Any], bool]]] = {
    "register_code": {
        "code_id": _str,
        "kind": _code_kind,
        "source": _source,
        "integrity_hash": _hash32,
    },
    "register_notary": {},
    "send_data_hash": {"data_hash": _hash32, "code_id": _str, "secret_hash": _commitment},
    "request_validation": {"notary_id": _address, **_PACKAGE_ARGS},
    "share_privately": {"peer_id": _address, **_PACKAGE_ARGS},
    "accept_vp": {"data_hash": _hash32},
    "send_notary_result": {"data_hash": _hash32, "n_result": _bytes},
    "publish": {"data_hash": _hash32, "data_url": _bytes, **_SECRET_ARGS},
    "confirm_publication": {"data_hash": _hash32, "n_result": _bytes},
    "withdraw": {"data_hash": _hash32, **_SECRET_ARGS},
}


def validate_call(op: str, args: Any) -> None:
    schema = CALL_SCHEMAS.get(op)
    if schema is None:
        raise MalformedCall(f"unknown operation {op!r}")
    if not isinstance(args, dict) or set(args) != set(schema):
        raise MalformedCall(f"{op}: expected arguments {sorted(schema)}")
    for name, check in schema.items():
        if not check(args[name]):
            raise MalformedCall(f"{op}: bad value for {name!r}")


# -- the state machine ------------------------------------------------------


class MovingContract:
    def __init__(self) -> None:
        self.codes: dict[str, CodeEntry] = {}
        self.notaries: dict[bytes, NotaryEntry] = {}
        self.certs: dict[bytes, Certificate] = {}
        self.packages: list[ValidatorPackage] = []

    def apply(self, op: str, args: dict, ctx: CallContext) -> Any:
        validate_call(op, args)
        return getattr(self, op)(ctx, **args)

    # code registry

    def register_code(
        self, ctx: CallContext, code_id: str, kind: str, source: str, integrity_hash: bytes
    ) -> bool:
        if code_id in self.codes:
            raise DuplicateCodeId(code_id)
        kind = CodeKind(kind)
        if kind is CodeKind.INLINE and crypto.sha256(source.encode("utf-8")) != integrity_hash:
            raise IntegrityMismatch(f"{code_id}: source does not hash to integrity_hash")
        self.codes[code_id] = CodeEntry(code_id, kind, source, integrity_hash)
        return True

    def get_code(self, code_id: str) -> CodeEntry:
        try:
            return self.codes[code_id]
        except KeyError:
            raise UnknownCodeId(code_id) from None

    def list_codes(self) -> list[str]:
        return sorted(self.codes)

    # notary registry

    def register_notary(self, ctx: CallContext) -> bool:
        ident = ctx.directory.get(ctx.sender)
        if ident is None or ident.role is not Role.NOTARY:
            raise NotANotaryIdentity(ctx.sender.hex())
        if ctx.sender in self.notaries:
            raise DuplicateNotary(ctx.sender.hex())
        self.notaries[ctx.sender] = NotaryEntry(ctx.sender, ident.enc_pubkey)
        return True

    def list_notaries(self) -> list[NotaryEntry]:
        return [n for n in self.notaries.values() if n.active]

    # certification

    def send_data_hash(
        self, ctx: CallContext, data_hash: bytes, code_id: str, secret_hash: bytes
    ) -> bool:
        if data_hash in self.certs:
            raise AlreadyCertified("data is already certified")
        self.get_code(code_id)
        self.certs[data_hash] = Certificate(
            data_hash=data_hash,
            timestamp=ctx.time,
            secret_hash=secret_hash,
            code_id=code_id,
            owner=ctx.sender,
            used_code=code_id,
        )
        return True

    def get_certificate(self, data_hash: bytes) -> Certificate:
        try:
            return self.certs[data_hash]
        except KeyError:
            raise NotCertified(data_hash.hex()) from None

    def _authorize(self, data_hash: bytes, secret: bytes) -> Certificate:
        cert = self.get_certificate(data_hash)
        if crypto.commit(secret) != cert.secret_hash:
            raise WrongSecret(data_hash.hex())
        return cert

    # validation / private sharing

    def _place_package(
        self,
        ctx: CallContext,
        kind: PackageKind,
        recipient: bytes,
        data_hash: bytes,
        data_url: bytes,
        data_pw: bytes,
        encrypted: bool,
        secret: bytes,
        new_secret_hash: bytes,
        code_id: str | None,
    ) -> bool:
        cert = self._authorize(data_hash, secret)
        if cert.status is Status.WITHDRAWN:
            raise Withdrawn(data_hash.hex())
        if kind is PackageKind.VALIDATION:
            notary = self.notaries.get(recipient)
            if notary is None or not notary.active:
                raise UnknownNotary(recipient.hex())
        elif recipient not in ctx.directory:
            raise UnknownPeer(recipient.hex())
        if cert.attempts >= MAX_RETRIES:
            raise RetryLimitExceeded(f"{cert.attempts} failed validations")
        used_code = code_id or cert.code_id
        self.get_code(used_code)

        cert.used_code = used_code
        cert.secret_hash = new_secret_hash
        if cert.vp is not None and cert.vp.is_open:
            cert.vp.voided = True
        vp = ValidatorPackage(
            package_id=len(self.packages),
            kind=kind,
            recipient=recipient,
            data_hash=data_hash,
            code_id=used_code,
            data_url=data_url,
            data_pw=data_pw,
            encrypted=encrypted,
            created_at=ctx.time,
            attempts=cert.attempts,
        )
        self.packages.append(vp)
        cert.vp = vp
        return True

    def request_validation(
        self,
        ctx: CallContext,
        notary_id: bytes,
        data_hash: bytes,
        data_url: bytes,
        data_pw: bytes,
        encrypted: bool,
        secret: bytes,
        new_secret_hash: bytes,
        code_id: str | None,
    ) -> bool:
        return self._place_package(
            ctx, PackageKind.VALIDATION, notary_id, data_hash, data_url, data_pw,
            encrypted, secret, new_secret_hash, code_id,
        )

    def share_privately(
        self,
        ctx: CallContext,
        peer_id: bytes,
        data_hash: bytes,
        data_url: bytes,
        data_pw: bytes,
        encrypted: bool,
        secret: bytes,
        new_secret_hash: bytes,
        code_id: str | None,
    ) -> bool:
        return self._place_package(
            ctx, PackageKind.SHARE, peer_id, data_hash, data_url, data_pw,
            encrypted, secret, new_secret_hash, code_id,
        )

    def get_vp(self, recipient: bytes) -> ValidatorPackage | None:
        """Oldest open, not yet accepted package addressed to ``recipient``."""
        for vp in self.packages:
            if vp.recipient == recipient and vp.is_open and not vp.accepted:
                return vp
        return None

    def _requested_package(self, data_hash: bytes, sender: bytes) -> ValidatorPackage:
        cert = self.certs.get(data_hash)
        vp = None if cert is None else cert.vp
        if vp is None or vp.recipient != sender:
            raise NotRequestedNotary("sender is not the requested notary or certificate does not exist")
        if cert.status is Status.WITHDRAWN:
            raise Withdrawn(data_hash.hex())
        if not vp.is_open:
            raise NotRequestedNotary("package already answered")
        return vp

    def accept_vp(self, ctx: CallContext, data_hash: bytes) -> CodeEntry:
        vp = self._requested_package(data_hash, ctx.sender)
        vp.accepted = True
        return self.get_code(vp.code_id)

    def send_notary_result(self, ctx: CallContext, data_hash: bytes, n_result: bytes) -> bool:
        vp = self._requested_package(data_hash, ctx.sender)
        if not vp.accepted:
            raise NotAccepted(data_hash.hex())
        cert = self.certs[data_hash]
        match = data_hash == n_result
        vp.closed = True
        if match:
            vp.validated = True
            vp.timestamp = ctx.time
            if vp.kind is PackageKind.VALIDATION:
                self._raise_status(cert, Status.VALIDATED)
                if cert.validator_address is None:
                    cert.validator_address = ctx.sender
            else:
                self._raise_status(cert, Status.SHARED)
        else:
            cert.attempts += 1
            vp.attempts = cert.attempts
        return match

    @staticmethod
    def _raise_status(cert: Certificate, status: Status) -> None:
        if _RANK[status] > _RANK[cert.status]:
            cert.status = status

    # publication

    def publish(
        self, ctx: CallContext, data_hash: bytes, data_url: bytes, secret: bytes, new_secret_hash: bytes
    ) -> bool:
        cert = self._authorize(data_hash, secret)
        if cert.status is Status.WITHDRAWN:
            raise Withdrawn(data_hash.hex())
        cert.secret_hash = new_secret_hash
        if cert.public_vp is not None:
            cert.public_vp.voided = True
        vp = ValidatorPackage(
            package_id=len(self.packages),
            kind=PackageKind.PUBLIC,
            recipient=None,
            data_hash=data_hash,
            code_id=cert.code_id,
            data_url=data_url,
            data_pw=b"",
            encrypted=False,
            created_at=ctx.time,
        )
        self.packages.append(vp)
        cert.public_vp = vp
        return True

    def get_public_vps(self) -> list[ValidatorPackage]:
        return [vp for vp in self.packages if vp.is_public and not vp.voided]

    def confirm_publication(self, ctx: CallContext, data_hash: bytes, n_result: bytes) -> bool:
        cert = self.certs.get(data_hash)
        if cert is None:
            raise NoPublicPackage(data_hash.hex())
        if cert.status is Status.WITHDRAWN:
            raise Withdrawn(data_hash.hex())
        vp = cert.public_vp
        if vp is None:
            raise NoPublicPackage(data_hash.hex())
        if n_result != data_hash:
            vp.attempts = min(vp.attempts + 1, MAX_RETRIES)
            return False
        if cert.status is not Status.PUBLISHED:
            vp.validated = True
            vp.timestamp = ctx.time
            cert.status = Status.PUBLISHED
            cert.validator_address = ctx.sender
        return True

    # withdrawal

    def withdraw(
        self, ctx: CallContext, data_hash: bytes, secret: bytes, new_secret_hash: bytes
    ) -> bool:
        cert = self._authorize(data_hash, secret)
        if cert.status is Status.WITHDRAWN:
            raise AlreadyWithdrawn(data_hash.hex())
        cert.secret_hash = new_secret_hash
        cert.status = Status.WITHDRAWN
        cert.withdrawn_at = ctx.time
        for vp in (cert.vp, cert.public_vp):
            if vp is not None and vp.is_open:
                vp.voided = True
        return True

    # serialization

    def state_obj(self) -> dict:
        return {
            "codes": {k: v.to_obj() for k, v in self.codes.items()},
            "notaries": {k.hex(): v.to_obj() for k, v in self.notaries.items()},
            "certs": {k.hex(): v.to_obj() for k, v in self.certs.items()},
            "packages": [vp.to_obj() for vp in self.packages],
        }

    def state_bytes(self) -> bytes:
        return encode(self.state_obj())
