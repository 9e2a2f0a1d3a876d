"""Canonical length-prefixed binary encoding.

Every hashed or signed structure in the package goes through :func:`encode`.
The format is small enough to port by hand; see ``docs/encoding.md``.

====  =========================================================
tag   body
====  =========================================================
N     (none)
F/T   (none)                      booleans
I     8-byte big-endian signed    integers in [-2**63, 2**63)
B     u32 length + raw bytes
S     u32 length + UTF-8 bytes
L     u32 count + items
D     u32 count + (S key, value)* keys strictly ascending by UTF-8
====  =========================================================

Decoding is strict: any non-canonical input (unsorted or duplicate keys,
trailing bytes, bad UTF-8, unknown tags) raises :class:`DecodeError`, so
every byte string decodes to at most one value and back to itself.
"""

from __future__ import annotations

import struct
from typing import Any

__all__ = ["DecodeError", "encode", "decode", "frame", "unframe"]

_U32 = struct.Struct(">I")
_I64 = struct.Struct(">q")
_MAX_LEN = 2**32 - 1


class DecodeError(ValueError):
    """Raised for malformed or non-canonical encodings."""


def encode(value: Any) -> bytes:
    out = bytearray()
    _encode(value, out)
    return bytes(out)


def _encode(value: Any, out: bytearray) -> None:
    if value is None:
        out += b"N"
    elif value is True:
        out += b"T"
    elif value is False:
        out += b"F"
    elif isinstance(value, int):
        if not -(2**63) <= value < 2**63:
            raise OverflowError(f"integer out of 64-bit range: {value}")
        out += b"I"
        out += _I64.pack(value)
    elif isinstance(value, (bytes, bytearray, memoryview)):
        data = bytes(value)
        _check_len(len(data))
        out += b"B"
        out += _U32.pack(len(data))
        out += data
    elif isinstance(value, str):
        data = value.encode("utf-8")
        _check_len(len(data))
        out += b"S"
        out += _U32.pack(len(data))
        out += data
    elif isinstance(value, (list, tuple)):
        _check_len(len(value))
        out += b"L"
        out += _U32.pack(len(value))
        for item in value:
            _encode(item, out)
    elif isinstance(value, dict):
        _check_len(len(value))
        items = []
        for key, item in value.items():
            if not isinstance(key, str):
                raise TypeError(f"dict keys must be str, got {type(key).__name__}")
            items.append((key.encode("utf-8"), item))
        items.sort(key=lambda kv: kv[0])
        out += b"D"
        out += _U32.pack(len(items))
        for key_bytes, item in items:
            out += b"S"
            out += _U32.pack(len(key_bytes))
            out += key_bytes
            _encode(item, out)
    else:
        raise TypeError(f"cannot canonically encode {type(value).__name__}")


def _check_len(n: int) -> None:
    if n > _MAX_LEN:
        raise OverflowError("length exceeds u32")


def decode(data: bytes) -> Any:
    view = memoryview(bytes(data))
    value, pos = _decode(view, 0)
    if pos != len(view):
        raise DecodeError(f"{len(view) - pos} trailing bytes")
    return value


def _take(view: memoryview, pos: int, n: int) -> tuple[memoryview, int]:
    end = pos + n
    if end > len(view):
        raise DecodeError("truncated input")
    return view[pos:end], end


def _decode(view: memoryview, pos: int) -> tuple[Any, int]:
    tag, pos = _take(view, pos, 1)
    t = tag.tobytes()
    if t == b"N":
        return None, pos
    if t == b"T":
        return True, pos
    if t == b"F":
        return False, pos
    if t == b"I":
        raw, pos = _take(view, pos, 8)
        return _I64.unpack(raw)[0], pos
    if t in (b"B", b"S"):
        raw, pos = _take(view, pos, 4)
        body, pos = _take(view, pos, _U32.unpack(raw)[0])
        if t == b"B":
            return body.tobytes(), pos
        try:
            return body.tobytes().decode("utf-8"), pos
        except UnicodeDecodeError as exc:
            raise DecodeError("invalid UTF-8") from exc
    if t == b"L":
        raw, pos = _take(view, pos, 4)
        items = []
        for _ in range(_U32.unpack(raw)[0]):
            item, pos = _decode(view, pos)
            items.append(item)
        return items, pos
    if t == b"D":
        raw, pos = _take(view, pos, 4)
        result: dict[str, Any] = {}
        prev: bytes | None = None
        for _ in range(_U32.unpack(raw)[0]):
            ktag, pos = _take(view, pos, 1)
            if ktag.tobytes() != b"S":
                raise DecodeError("dict key is not a string")
            klen, pos = _take(view, pos, 4)
            kraw, pos = _take(view, pos, _U32.unpack(klen)[0])
            kbytes = kraw.tobytes()
            if prev is not None and kbytes <= prev:
                raise DecodeError("dict keys not strictly ascending")
            prev = kbytes
            try:
                key = kbytes.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DecodeError("invalid UTF-8 key") from exc
            result[key], pos = _decode(view, pos)
        return result, pos
    raise DecodeError(f"unknown tag {t!r}")


def frame(record: bytes) -> bytes:
    """Prefix ``record`` with its u32 length (chain-file framing)."""
    _check_len(len(record))
    return _U32.pack(len(record)) + record


def unframe(data: bytes) -> list[bytes]:
    """Split a concatenation of framed records; strict about truncation."""
    records = []
    view = memoryview(data)
    pos = 0
    while pos < len(view):
        raw, pos = _take(view, pos, 4)
        body, pos = _take(view, pos, _U32.unpack(raw)[0])
        records.append(body.tobytes())
    return records
