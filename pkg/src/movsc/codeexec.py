"""Turn registered code into a runnable program and run it on byte streams.

Registered code is text in a tiny pipeline language (``docs/code-dsl.md``)::

    movsc-dsl 1
    read 65536
    hash sha256

Code ids that name a builtin (``SHA256``, ``KECCAK256``, ``SHA3_256``) are
bound to a pinned program, but only after the on-chain entry's integrity
hash is checked against the hash pinned for that builtin.  Anything else is
parsed and interpreted.  Programs never touch the filesystem or network;
data arrives as a byte stream.
"""

from __future__ import annotations

import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable

from . import crypto
from .contract import CodeEntry, CodeKind

DSL_HEADER = "movsc-dsl 1"
DEFAULT_TIMEOUT = 300.0
MAX_CHUNK = 1 << 24

# DSL algorithm names -> crypto code ids
ALGORITHMS = {"sha256": "SHA256", "keccak256": "KECCAK256", "sha3-256": "SHA3_256"}

Fetcher = Callable[[str], bytes]


class CodeExecError(Exception):
    pass


class IntegrityMismatch(CodeExecError):
    pass


class UnsupportedSource(CodeExecError):
    pass


class FetchFailure(CodeExecError):
    pass


class ExecutionTimeout(CodeExecError):
    pass


@dataclass(frozen=True)
class ExecutableProgram:
    """A parsed pipeline: stream-hash with ``algorithm``, then ``stages``.

    Each stage is ``("hash", code_id)`` or ``("encode", "hex")`` applied to
    the previous output.
    """

    code_id: str
    integrity_hash: bytes
    chunk_size: int
    algorithm: str
    stages: tuple[tuple[str, str], ...] = ()

    def transform(self, data: crypto.ByteSource, timeout: float | None = None) -> bytes:
        return execute(self, data, timeout)


def parse_source(source: str, code_id: str = "<inline>", integrity_hash: bytes | None = None) -> ExecutableProgram:
    lines = []
    for raw in source.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    if not lines or lines[0] != DSL_HEADER.split():
        raise UnsupportedSource(f"{code_id}: missing '{DSL_HEADER}' header")
    body = lines[1:]
    if not body or body[0][0] != "read":
        raise UnsupportedSource(f"{code_id}: program must start with 'read <chunk-size>'")
    read = body[0]
    if len(read) != 2 or not read[1].isdigit() or not 1 <= int(read[1]) <= MAX_CHUNK:
        raise UnsupportedSource(f"{code_id}: bad read statement {' '.join(read)!r}")
    chunk_size = int(read[1])

    stages: list[tuple[str, str]] = []
    for stmt in body[1:]:
        if len(stmt) == 2 and stmt[0] == "hash" and stmt[1] in ALGORITHMS:
            stages.append(("hash", ALGORITHMS[stmt[1]]))
        elif stmt == ["encode", "hex"]:
            stages.append(("encode", "hex"))
        else:
            raise UnsupportedSource(f"{code_id}: unsupported statement {' '.join(stmt)!r}")
    if not stages or stages[0][0] != "hash":
        raise UnsupportedSource(f"{code_id}: first stage after read must be a hash")
    if stages[-1][0] != "hash":
        raise UnsupportedSource(f"{code_id}: program must end with a hash stage")
    if integrity_hash is None:
        integrity_hash = crypto.sha256(source.encode("utf-8"))
    return ExecutableProgram(code_id, integrity_hash, chunk_size, stages[0][1], tuple(stages[1:]))


def _builtin_source(dsl_alg: str) -> str:
    return f"{DSL_HEADER}\n# streaming {dsl_alg} digest of the raw data\nread 65536\nhash {dsl_alg}\n"


BUILTIN_SOURCES: dict[str, str] = {
    "SHA256": _builtin_source("sha256"),
    "KECCAK256": _builtin_source("keccak256"),
    "SHA3_256": _builtin_source("sha3-256"),
}

BUILTINS: dict[str, ExecutableProgram] = {
    code_id: parse_source(src, code_id) for code_id, src in BUILTIN_SOURCES.items()
}


def builtin_entry(code_id: str) -> CodeEntry:
    """The inline registry entry whose integrity hash a builtin is pinned to."""
    source = BUILTIN_SOURCES[code_id]
    return CodeEntry(code_id, CodeKind.INLINE, source, crypto.sha256(source.encode("utf-8")))


def fetch_url(url: str, timeout: float = 30.0) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise FetchFailure(f"{url}: {exc}") from exc


def materialize(entry: CodeEntry, fetch: Fetcher | None = None) -> ExecutableProgram:
    if entry.kind is CodeKind.INLINE:
        code = entry.source.encode("utf-8")
    else:
        try:
            code = (fetch or fetch_url)(entry.source)
        except FetchFailure:
            raise
        except Exception as exc:
            raise FetchFailure(f"{entry.source}: {exc}") from exc
    if crypto.sha256(code) != entry.integrity_hash:
        raise IntegrityMismatch(f"{entry.code_id}: code bytes do not match the on-chain hash")

    builtin = BUILTINS.get(entry.code_id)
    if builtin is not None:
        if builtin.integrity_hash != entry.integrity_hash:
            raise IntegrityMismatch(f"{entry.code_id}: on-chain code differs from the pinned builtin")
        return builtin
    try:
        source = code.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise UnsupportedSource(f"{entry.code_id}: code is not UTF-8 text") from exc
    return parse_source(source, entry.code_id, entry.integrity_hash)


def execute(program: ExecutableProgram, data: crypto.ByteSource, timeout: float | None = None) -> bytes:
    """Run ``program`` over ``data``; memory use is one chunk regardless of size."""
    limit = DEFAULT_TIMEOUT if timeout is None else timeout
    deadline = time.monotonic() + limit
    hasher = crypto.new_hasher(program.algorithm)
    for chunk in crypto.iter_chunks(data, program.chunk_size):
        if time.monotonic() > deadline:
            raise ExecutionTimeout(f"{program.code_id}: exceeded {limit} s")
        hasher.update(chunk)
    out = hasher.digest()
    for kind, arg in program.stages:
        if kind == "hash":
            out = crypto.hash(arg, out)
        else:
            out = out.hex().encode("ascii")
    if time.monotonic() > deadline:
        raise ExecutionTimeout(f"{program.code_id}: exceeded {limit} s")
    return out
