"""
Publishing, private sharing and withdrawal
==========================================

After certification the owner can publish the data for anyone to check,
hand it to one peer, or withdraw the result. Each step spends the current
secret and installs a fresh one.
"""

from movsc import ClientSession, ContractInterface, DataStore, Identity, Ledger, NotaryDaemon, Resolver, Role
from movsc import codeexec
from movsc.contract import WrongSecret
from movsc.notary import confirm_publication

ledger = Ledger()
op = ContractInterface(ledger, Identity.generate(Role.PEER))
op.register()
e = codeexec.builtin_entry("SHA256")
op.register_code("SHA256", e.kind.value, e.source, e.integrity_hash)

alice, pete, quinn = (ContractInterface(ledger, Identity.generate(r)) for r in (Role.CLIENT, Role.PEER, Role.PEER))
for iface in (alice, pete, quinn):
    iface.register()

client = ClientSession(alice)
store = DataStore()
data = b"open dataset v1"
h, _ = client.certify_data(data)

# Private share: an encrypted package addressed to pete only.
token = store.put(data, b"for pete")
client.share_privately(h, pete.address, store.url_for(token), b"for pete")
print("pete:", NotaryDaemon(pete, Resolver(store)).poll_once().outcome.value)
print("status after share:", client.status(h).status.value)

# Publication: a public package anybody may verify. The first match wins.
public = store.put(data, b"")
client.publish_data(h, store.url_for(public))
digest, receipt = confirm_publication(quinn, h, Resolver(store))
print("quinn confirms:", receipt.result, "| status:", client.status(h).status.value)

# Secrets are single use: replaying the one just spent is refused.
spent = client.store.get(h)
client.withdraw_result(h)
replay = alice.withdraw(h, spent, b"\x01" * 32)
print("replayed secret:", type(replay.error).__name__, isinstance(replay.error, WrongSecret))
print("final status:", client.status(h).status.value)
