"""
Registering your own code
=========================

Code entries are pinned by hash. Inline programs live on chain; external
ones are fetched and checked before they run. The program text is a tiny
pipeline language, not Python.
"""

import hashlib

from movsc import ClientSession, ContractInterface, Identity, Ledger, Role, crypto
from movsc.codeexec import IntegrityMismatch, materialize, parse_source
from movsc.contract import CodeEntry, CodeKind

ledger = Ledger()
alice = ContractInterface(ledger, Identity.generate(Role.CLIENT))
alice.register()

double_sha = "movsc-dsl 1\nread 65536\nhash sha256\nhash sha256\n"
alice.register_code("DOUBLE_SHA256", "inline_source", double_sha, crypto.sha256(double_sha.encode()))

client = ClientSession(alice)
h, _ = client.certify_data(b"block header", "DOUBLE_SHA256")
print("double sha256:", h.hex())
print("matches hashlib:", h == hashlib.sha256(hashlib.sha256(b"block header").digest()).digest())

# An external entry: the URL is on chain, the bytes are verified on arrival.
hosted = {"https://code.example/hex-keccak": b"movsc-dsl 1\nread 4096\nhash sha256\nencode hex\nhash keccak256\n"}
entry = CodeEntry("HEX_KECCAK", CodeKind.EXTERNAL, "https://code.example/hex-keccak",
                  crypto.sha256(hosted["https://code.example/hex-keccak"]))
program = materialize(entry, fetch=hosted.__getitem__)
print("external program stages:", program.algorithm, program.stages)

# Someone swaps the hosted file: nothing runs.
hosted["https://code.example/hex-keccak"] += b"# changed\n"
try:
    materialize(entry, fetch=hosted.__getitem__)
except IntegrityMismatch as exc:
    print("refused:", exc)

# Anything outside the grammar is rejected before execution.
try:
    parse_source("movsc-dsl 1\nread 10\nhash sha256\nimport os\n")
except Exception as exc:
    print(type(exc).__name__, "-", exc)
