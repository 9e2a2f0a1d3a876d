"""Single-node simulated blockchain hosting the moving smart contract.

Transactions are signed contract calls.  Each :meth:`Ledger.submit` (or
:meth:`Ledger.submit_batch`) seals exactly one block, applying its calls to
the contract in order.  A call that reverts is still recorded; its error is
carried in the :class:`Receipt`.

Chain files are append-only: one u32-length-prefixed canonical block
encoding per block, genesis first.  Several processes may share one chain
file; writers serialize on an exclusive ``flock`` and catch up on blocks
appended by others before sealing.
"""

from __future__ import annotations

import fcntl
import json
import threading
import time as _time
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Callable, Iterable, Sequence

from . import crypto
from .contract import CallContext, ContractError, MalformedCall, MovingContract, validate_call
from .encoding import DecodeError, decode, encode, frame, unframe
from .identity import Identity, PublicIdentity, Role, derive_address

ZERO_HASH = bytes(32)
GENESIS_TIMESTAMP = 0
REGISTER_OP = "register_identity"

Clock = Callable[[], int]


class LedgerError(Exception):
    pass


class BadSignature(LedgerError):
    pass


class BadNonce(LedgerError):
    pass


class BadPayload(LedgerError):
    pass


class DuplicateAddress(LedgerError):
    pass


class UnknownAddress(LedgerError):
    pass


def wall_clock() -> int:
    return int(_time.time())


@dataclass(frozen=True)
class Transaction:
    sender: bytes
    nonce: int
    payload: bytes
    signature: bytes

    @staticmethod
    def signing_bytes(sender: bytes, nonce: int, payload: bytes) -> bytes:
        return encode({"sender": sender, "nonce": nonce, "payload": payload})

    @classmethod
    def create(cls, identity: Identity, nonce: int, op: str, args: dict) -> "Transaction":
        payload = encode({"op": op, "args": args})
        sender = identity.address
        sig = identity.sign(cls.signing_bytes(sender, nonce, payload))
        return cls(sender, nonce, payload, sig)

    @classmethod
    def registration(cls, identity: Identity) -> "Transaction":
        args = {
            "sign_pubkey": identity.sign_pubkey,
            "enc_pubkey": identity.enc_pubkey,
            "role": identity.role.value,
        }
        return cls.create(identity, 0, REGISTER_OP, args)

    def call(self) -> tuple[str, dict]:
        try:
            obj = decode(self.payload)
            op, args = obj["op"], obj["args"]
        except (DecodeError, KeyError, TypeError) as exc:
            raise BadPayload("payload is not a contract call") from exc
        if not isinstance(op, str) or not isinstance(args, dict):
            raise BadPayload("payload is not a contract call")
        return op, args

    def to_obj(self) -> dict:
        return {
            "sender": self.sender,
            "nonce": self.nonce,
            "payload": self.payload,
            "signature": self.signature,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Transaction":
        return cls(obj["sender"], obj["nonce"], obj["payload"], obj["signature"])


def compute_tx_root(txs: Sequence[Transaction]) -> bytes:
    return crypto.sha256(encode([tx.to_obj() for tx in txs]))


def compute_block_hash(height: int, prev_hash: bytes, tx_root: bytes, timestamp: int) -> bytes:
    return crypto.sha256(
        encode({"height": height, "prev_hash": prev_hash, "tx_root": tx_root, "timestamp": timestamp})
    )


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    tx_root: bytes
    timestamp: int
    block_hash: bytes
    transactions: tuple[Transaction, ...]

    @classmethod
    def seal(cls, height: int, prev_hash: bytes, timestamp: int, txs: Sequence[Transaction]) -> "Block":
        root = compute_tx_root(txs)
        return cls(
            height, prev_hash, root, timestamp,
            compute_block_hash(height, prev_hash, root, timestamp), tuple(txs),
        )

    def is_self_consistent(self) -> bool:
        return (
            compute_tx_root(self.transactions) == self.tx_root
            and compute_block_hash(self.height, self.prev_hash, self.tx_root, self.timestamp)
            == self.block_hash
        )

    def to_obj(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash,
            "tx_root": self.tx_root,
            "timestamp": self.timestamp,
            "block_hash": self.block_hash,
            "transactions": [tx.to_obj() for tx in self.transactions],
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "Block":
        return cls(
            obj["height"], obj["prev_hash"], obj["tx_root"], obj["timestamp"], obj["block_hash"],
            tuple(Transaction.from_obj(t) for t in obj["transactions"]),
        )

    def to_bytes(self) -> bytes:
        return encode(self.to_obj())

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        try:
            return cls.from_obj(decode(data))
        except (KeyError, TypeError, AttributeError) as exc:
            raise DecodeError("not a block encoding") from exc


GENESIS = Block.seal(0, ZERO_HASH, GENESIS_TIMESTAMP, [])


@dataclass(frozen=True)
class Receipt:
    block_height: int
    tx_index: int
    result: Any = None
    error: ContractError | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def raise_for_error(self) -> "Receipt":
        if self.error is not None:
            raise self.error
        return self


def verify_blocks(blocks: Sequence[Block]) -> bool:
    """Hash-chain and tx-root check over a block sequence starting at genesis."""
    if not blocks:
        return False
    prev_hash, prev_ts = ZERO_HASH, None
    for height, block in enumerate(blocks):
        if not isinstance(block.timestamp, int) or not isinstance(block.height, int):
            return False
        if block.height != height or block.prev_hash != prev_hash:
            return False
        if prev_ts is not None and block.timestamp < prev_ts:
            return False
        try:
            if not block.is_self_consistent():
                return False
        except (TypeError, AttributeError, OverflowError):
            return False
        prev_hash, prev_ts = block.block_hash, block.timestamp
    return True


def read_chain_file(path: str | Path) -> list[Block]:
    return [Block.from_bytes(rec) for rec in unframe(Path(path).read_bytes())]


def verify_chain_file(path: str | Path) -> bool:
    try:
        blocks = read_chain_file(path)
    except (DecodeError, TypeError, ValueError):
        return False
    return verify_blocks(blocks)


def _jsonable(value: Any) -> Any:
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class Ledger:
    """Append-only chain plus the world state it implies.

    ``clock`` returns integer seconds; harnesses inject a mock clock.
    With ``path`` the chain is persisted (and loaded if the file exists).
    """

    def __init__(self, clock: Clock | None = None, path: str | Path | None = None):
        self.clock = clock or wall_clock
        self.path = Path(path) if path is not None else None
        self.contract = MovingContract()
        self.directory: dict[bytes, PublicIdentity] = {}
        self.blocks: list[Block] = [GENESIS]
        self.receipts: list[list[Receipt]] = [[]]
        self._next_nonce: dict[bytes, int] = {}
        self._lock = threading.RLock()
        self._subscribers: list[Callable[[Block], None]] = []
        self._file_offset = 0
        if self.path is not None:
            with self._file_locked():
                if self.path.stat().st_size == 0:
                    with self.path.open("ab") as fh:
                        fh.write(frame(GENESIS.to_bytes()))
                self._sync_from_file()

    # -- construction from history --------------------------------------

    @classmethod
    def replay(cls, blocks: Iterable[Block]) -> "Ledger":
        """Rebuild a ledger (and contract state) by re-applying ``blocks``."""
        ledger = cls(clock=lambda: GENESIS_TIMESTAMP)
        blocks = list(blocks)
        if not blocks or blocks[0] != GENESIS:
            raise LedgerError("chain does not start at genesis")
        for block in blocks[1:]:
            ledger._append_existing(block)
        return ledger

    @classmethod
    def load(cls, path: str | Path) -> "Ledger":
        return cls.replay(read_chain_file(path))

    def _append_existing(self, block: Block) -> None:
        tip = self.blocks[-1]
        if block.height != tip.height + 1 or block.prev_hash != tip.block_hash:
            raise LedgerError(f"block {block.height} does not extend the tip")
        if not block.is_self_consistent():
            raise LedgerError(f"block {block.height} hash mismatch")
        pending = dict(self._next_nonce)
        for tx in block.transactions:
            self._check(tx, pending)
        self.receipts.append(self._apply_all(block.height, block.timestamp, block.transactions))
        self.blocks.append(block)

    # -- submission -----------------------------------------------------

    def subscribe(self, callback: Callable[[Block], None]) -> None:
        """Call ``callback(block)`` after every sealed block (any thread)."""
        self._subscribers.append(callback)

    def submit(self, tx: Transaction) -> Receipt:
        return self.submit_batch([tx])[0]

    def submit_batch(self, txs: Sequence[Transaction]) -> list[Receipt]:
        """Seal ``txs`` into one block.  Invalid batches are rejected whole."""
        with self._lock:
            if self.path is not None:
                with self._file_locked():
                    self._sync_from_file()
                    block, receipts = self._seal(txs)
                    with self.path.open("ab") as fh:
                        fh.write(frame(block.to_bytes()))
                    self._file_offset = self.path.stat().st_size
            else:
                block, receipts = self._seal(txs)
        for callback in list(self._subscribers):
            callback(block)
        return receipts

    def _seal(self, txs: Sequence[Transaction]) -> tuple[Block, list[Receipt]]:
        pending = dict(self._next_nonce)
        for tx in txs:
            self._check(tx, pending)
        tip = self.blocks[-1]
        timestamp = max(int(self.clock()), tip.timestamp)
        height = tip.height + 1
        receipts = self._apply_all(height, timestamp, txs)
        block = Block.seal(height, tip.block_hash, timestamp, txs)
        self.blocks.append(block)
        self.receipts.append(receipts)
        return block, receipts

    def _check(self, tx: Transaction, pending: dict[bytes, int]) -> None:
        op, args = tx.call()
        message = Transaction.signing_bytes(tx.sender, tx.nonce, tx.payload)
        if op == REGISTER_OP:
            pub = args.get("sign_pubkey")
            if not isinstance(pub, bytes) or derive_address(pub) != tx.sender:
                raise BadSignature("registration sender does not match its key")
            if not crypto.verify(message, tx.signature, pub):
                raise BadSignature(tx.sender.hex())
            if tx.sender in self.directory or tx.sender in pending:
                raise DuplicateAddress(tx.sender.hex())
            if not isinstance(args.get("enc_pubkey"), bytes) or args.get("role") not in {
                r.value for r in Role
            }:
                raise BadPayload("malformed registration")
            if tx.nonce != 0:
                raise BadNonce("registration must use nonce 0")
            pending[tx.sender] = 1
            return
        ident = self.directory.get(tx.sender)
        if ident is None:
            raise UnknownAddress(tx.sender.hex())
        if not crypto.verify(message, tx.signature, ident.sign_pubkey):
            raise BadSignature(tx.sender.hex())
        expected = pending.get(tx.sender, 0)
        if tx.nonce != expected:
            raise BadNonce(f"expected nonce {expected}, got {tx.nonce}")
        try:
            validate_call(op, args)
        except MalformedCall as exc:
            raise BadPayload(str(exc)) from exc
        pending[tx.sender] = expected + 1

    def _apply_all(self, height: int, timestamp: int, txs: Sequence[Transaction]) -> list[Receipt]:
        receipts = []
        directory = MappingProxyType(self.directory)
        for index, tx in enumerate(txs):
            op, args = tx.call()
            self._next_nonce[tx.sender] = tx.nonce + 1
            if op == REGISTER_OP:
                self.directory[tx.sender] = PublicIdentity(
                    tx.sender, args["sign_pubkey"], args["enc_pubkey"], Role(args["role"])
                )
                receipts.append(Receipt(height, index, tx.sender))
                continue
            try:
                result = self.contract.apply(op, args, CallContext(tx.sender, timestamp, directory))
            except ContractError as exc:
                receipts.append(Receipt(height, index, None, exc))
            else:
                receipts.append(Receipt(height, index, result))
        return receipts

    # -- persistence ----------------------------------------------------

    def _file_locked(self):
        ledger = self

        class _Lock:
            def __enter__(self):
                self.fh = ledger.path.open("ab+")
                fcntl.flock(self.fh, fcntl.LOCK_EX)

            def __exit__(self, *exc):
                fcntl.flock(self.fh, fcntl.LOCK_UN)
                self.fh.close()

        return _Lock()

    def _sync_from_file(self) -> None:
        with self.path.open("rb") as fh:
            fh.seek(self._file_offset)
            tail = fh.read()
        records = unframe(tail)
        if self._file_offset == 0:
            if not records or Block.from_bytes(records[0]) != GENESIS:
                raise LedgerError(f"{self.path}: chain does not start at genesis")
            records = records[1:]
        for rec in records:
            self._append_existing(Block.from_bytes(rec))
        self._file_offset += len(tail)

    def refresh(self) -> None:
        """Pick up blocks appended to the chain file by other processes."""
        if self.path is None:
            return
        with self._lock, self._file_locked():
            self._sync_from_file()

    def write_chain(self, path: str | Path) -> None:
        with self._lock:
            data = b"".join(frame(b.to_bytes()) for b in self.blocks)
        Path(path).write_bytes(data)

    # -- queries --------------------------------------------------------

    def register_identity(self, identity: Identity) -> bytes:
        if identity.address in self.directory:
            raise DuplicateAddress(identity.address.hex())
        self.submit(Transaction.registration(identity))
        return identity.address

    def get_identity(self, address: bytes) -> PublicIdentity:
        try:
            return self.directory[address]
        except KeyError:
            raise UnknownAddress(address.hex()) from None

    def get_public_key(self, address: bytes) -> bytes:
        return self.get_identity(address).enc_pubkey

    def next_nonce(self, address: bytes) -> int:
        with self._lock:
            return self._next_nonce.get(address, 0)

    def view(self, fn: Callable[[MovingContract], Any]) -> Any:
        with self._lock:
            return fn(self.contract)

    @property
    def height(self) -> int:
        return self.blocks[-1].height

    def verify_chain(self) -> bool:
        with self._lock:
            return verify_blocks(list(self.blocks))

    def state_bytes(self) -> bytes:
        """Canonical world state: identity directory plus contract state."""
        with self._lock:
            directory = {k.hex(): v.to_obj() for k, v in self.directory.items()}
            return encode({"directory": directory, "contract": self.contract.state_obj()})

    def export_obj(self) -> dict:
        with self._lock:
            blocks = []
            for block, receipts in zip(self.blocks, self.receipts):
                obj = _jsonable(block.to_obj())
                for tx_obj, tx, receipt in zip(obj["transactions"], block.transactions, receipts):
                    op, args = tx.call()
                    tx_obj["call"] = {"op": op, "args": _jsonable(args)}
                    tx_obj["error"] = None if receipt.ok else receipt.error.code
                blocks.append(obj)
            return {"height": self.height, "blocks": blocks}

    def export_json(self) -> str:
        return json.dumps(self.export_obj(), indent=2, sort_keys=True)
