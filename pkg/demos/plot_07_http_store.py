"""
Data over a real socket
=======================

The same token and password protocol, served on loopback HTTP, so client
and notary talk across an actual network path.
"""

from movsc import ClientSession, ContractInterface, DataStore, Identity, Ledger, NotaryDaemon, Resolver, Role
from movsc import codeexec
from movsc.datastore import AccessDenied, http_retrieve

ledger = Ledger()
op = ContractInterface(ledger, Identity.generate(Role.PEER))
op.register()
e = codeexec.builtin_entry("KECCAK256")
op.register_code("KECCAK256", e.kind.value, e.source, e.integrity_hash)

alice = ContractInterface(ledger, Identity.generate(Role.CLIENT))
nora = ContractInterface(ledger, Identity.generate(Role.NOTARY))
alice.register()
nora.register()
nora.register_notary()

store = DataStore()
data = bytes(range(256)) * 4000
token = store.put(data, b"s3cret")

with store.serve_http() as server:
    url = server.url_for(token)
    print("serving", url)
    try:
        http_retrieve(url, b"guess")
    except AccessDenied:
        print("wrong password -> 403")

    client = ClientSession(alice)
    h, _ = client.certify_data(data, "KECCAK256")
    client.initiate_data_validation(h, nora.address, url, b"s3cret")
    # Resolver() with no in-process store: only http(s) URLs work.
    print("notary over HTTP:", NotaryDaemon(nora, Resolver()).poll_once().outcome.value)
