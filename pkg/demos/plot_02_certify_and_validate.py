"""
Certify, then ask a notary
==========================

A client proves its data existed by putting the digest on chain. A notary,
picked by the client, then recomputes the digest from the data itself,
which reaches it encrypted through the contract.
"""

from movsc import ClientSession, ContractInterface, DataStore, Identity, Ledger, NotaryDaemon, Resolver, Role
from movsc import codeexec

ledger = Ledger()

# An operator publishes the trusted hashing code once.
operator = ContractInterface(ledger, Identity.generate(Role.PEER))
operator.register()
for code_id in codeexec.BUILTIN_SOURCES:
    entry = codeexec.builtin_entry(code_id)
    operator.register_code(code_id, entry.kind.value, entry.source, entry.integrity_hash)
print("registered code:", operator.list_codes())

alice = ContractInterface(ledger, Identity.generate(Role.CLIENT))
nora = ContractInterface(ledger, Identity.generate(Role.NOTARY))
alice.register()
nora.register()
nora.register_notary()

# Step 1: the client hashes with the on-chain code and certifies.
client = ClientSession(alice)
data = b"measurements, run 7\n" * 1000
data_hash, receipt = client.certify_data(data)
print("certified", data_hash.hex(), "in block", receipt.block_height)

# The data itself travels off chain. Here: an in-process password store.
store = DataStore()
token = store.put(data, b"correct horse")

# Step 2: URL and password are sealed for nora's key before they go on chain.
client.initiate_data_validation(data_hash, nora.address, store.url_for(token), b"correct horse")
package = client.status(data_hash).vp
print("on-chain URL is an envelope of", len(package.data_url), "bytes; plaintext absent:",
      store.url_for(token).encode() not in package.data_url)

# The notary decrypts, fetches, runs the same code and reports its digest.
daemon = NotaryDaemon(nora, Resolver(store))
result = daemon.poll_once()
print("notary outcome:", result.outcome.value)

cert = client.status(data_hash)
print("status:", cert.status.value, "| validated by", cert.validator_address.hex())
