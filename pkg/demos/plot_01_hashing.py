"""
Streaming hashes
================

The three digests the protocol can certify with, computed over bytes,
files and generators alike.
"""

import io

from movsc import crypto

# Reference values everyone can check by hand.
print("sha256('abc')    ", crypto.hash("SHA256", b"abc").hex())
print("keccak256('abc') ", crypto.hash("KECCAK256", b"abc").hex())
print("sha3_256('abc')  ", crypto.hash("SHA3_256", b"abc").hex())

# Keccak-256 and SHA3-256 differ only in padding, yet every output differs.
assert crypto.hash("KECCAK256", b"") != crypto.hash("SHA3_256", b"")

# Data is a byte stream: one code path for bytes, file objects and iterables.
data = bytes(range(256)) * 4096
as_bytes = crypto.hash("SHA256", data)
as_file = crypto.hash("SHA256", io.BytesIO(data))
as_chunks = crypto.hash("SHA256", (data[i : i + 1000] for i in range(0, len(data), 1000)))
print("chunking changes nothing:", as_bytes == as_file == as_chunks)

# A certificate secret is a random preimage plus its public commitment.
secret = crypto.generate_secret()
print("commitment", secret.commitment.hex()[:16], "... opens with a", len(secret.preimage), "byte preimage")
