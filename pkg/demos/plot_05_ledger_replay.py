"""
The chain file
==============

Every block lands in an append-only file. Replaying it rebuilds the
identical contract state, and any flipped byte breaks verification.
"""

import random
import tempfile
from pathlib import Path

from movsc import ClientSession, ContractInterface, Identity, Ledger, Role
from movsc import codeexec
from movsc.contract import AlreadyCertified
from movsc.ledger import verify_chain_file

path = Path(tempfile.mkdtemp()) / "chain.bin"
ledger = Ledger(path=path)
op = ContractInterface(ledger, Identity.generate(Role.PEER))
op.register()
e = codeexec.builtin_entry("SHA256")
op.register_code("SHA256", e.kind.value, e.source, e.integrity_hash)

alice = ContractInterface(ledger, Identity.generate(Role.CLIENT))
alice.register()
client = ClientSession(alice)
for i in range(5):
    client.certify_data(b"file %d" % i)
try:
    client.certify_data(b"file 0")
except AlreadyCertified:
    print("second certification reverted, but the call is on chain")

print("height", ledger.height, "| file bytes", path.stat().st_size)
print("chain valid:", verify_chain_file(path))

# A second process would just load the file.
replayed = Ledger.load(path)
print("replayed state identical:", replayed.state_bytes() == ledger.state_bytes())

# The last transaction's receipt carries the contract error.
print("last call:", ledger.export_obj()["blocks"][-1]["transactions"][0]["error"])

# Flip random bytes: each one is detected.
raw = path.read_bytes()
rng = random.Random(0)
detected = 0
for _ in range(200):
    bad = bytearray(raw)
    bad[rng.randrange(len(raw))] ^= 0xFF
    path.write_bytes(bytes(bad))
    detected += not verify_chain_file(path)
path.write_bytes(raw)
print(f"single-byte corruptions detected: {detected}/200")
