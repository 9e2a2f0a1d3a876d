"""
Tampering and dishonest parties
===============================

What the contract catches: data that changed after certification, a
client pushing a fake certificate through, and notaries that lie. Every
failed comparison counts, and after three the certificate is frozen.
"""

from movsc import ClientSession, ContractInterface, DataStore, Identity, Ledger, NotaryDaemon, Resolver, Role
from movsc import codeexec
from movsc.contract import MAX_RETRIES, RetryLimitExceeded
from movsc.datastore import flip_byte

ledger = Ledger()
op = ContractInterface(ledger, Identity.generate(Role.PEER))
op.register()
e = codeexec.builtin_entry("SHA256")
op.register_code("SHA256", e.kind.value, e.source, e.integrity_hash)

alice = ContractInterface(ledger, Identity.generate(Role.CLIENT))
honest = ContractInterface(ledger, Identity.generate(Role.NOTARY))
liar = ContractInterface(ledger, Identity.generate(Role.NOTARY))
for iface in (alice, honest, liar):
    iface.register()
honest.register_notary()
liar.register_notary()

store = DataStore(simulation=True)
client = ClientSession(alice)
data = b"sensor log"
h, _ = client.certify_data(data)

# One flipped bit between certification and notarization.
token = store.put(data, b"pw")
store.tamper(token, flip_byte(0, 0x01))
client.initiate_data_validation(h, honest.address, store.url_for(token), b"pw")
r = NotaryDaemon(honest, Resolver(store)).poll_once()
print("tampered data:", r.outcome.value, "| attempts", client.status(h).attempts)

# A notary that approves without looking. The contract cannot tell, but the
# audit log shows it never computed anything.
blind = NotaryDaemon(liar, Resolver(store), dishonest="validate-blind", simulation=True)
client.initiate_data_validation(h, liar.address, store.url_for(token), b"pw")
r = blind.poll_once()
print("blind notary:", r.outcome.value, "| computed digest:", r.digest)

# Refusing to run a cheating notary outside simulation.
try:
    NotaryDaemon(liar, Resolver(store), dishonest="invalidate-on-purpose")
except ValueError as exc:
    print("refused:", exc)

# Keep failing until the retry budget is gone.
spiteful = NotaryDaemon(honest, Resolver(store), dishonest="invalidate-on-purpose", simulation=True)
good = store.put(data, b"pw")
while client.status(h).attempts < MAX_RETRIES:
    client.initiate_data_validation(h, honest.address, store.url_for(good), b"pw")
    spiteful.poll_once()
try:
    client.initiate_data_validation(h, honest.address, store.url_for(good), b"pw")
except RetryLimitExceeded:
    print("after", MAX_RETRIES, "failures: RetryLimitExceeded")
