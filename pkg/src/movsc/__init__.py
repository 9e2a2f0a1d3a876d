"""Moving smart contracts: trusted software distribution and off-chain data certification.

A simulated ledger hosts a contract that stores hashing software, records
proof-of-existence certificates, and coordinates notary validation,
publication, private sharing and withdrawal of off-chain data.
"""

from .client import ClientSession, SecretStore
from .codeexec import ExecutableProgram, execute, materialize
from .contract import (
    MAX_RETRIES,
    Certificate,
    CodeEntry,
    ContractError,
    MovingContract,
    Status,
    ValidatorPackage,
)
from .datastore import DataStore, Resolver
from .harness import Scenario, ScenarioReport, run_scenario, run_suite
from .identity import Identity, Role
from .interface import ContractInterface
from .ledger import Block, Ledger, Receipt, Transaction
from .notary import NotaryDaemon, ProcessingOutcome

__version__ = "0.1.0"

__all__ = [
    "MAX_RETRIES",
    "Block",
    "Certificate",
    "ClientSession",
    "CodeEntry",
    "ContractError",
    "ContractInterface",
    "DataStore",
    "ExecutableProgram",
    "Identity",
    "Ledger",
    "MovingContract",
    "NotaryDaemon",
    "ProcessingOutcome",
    "Receipt",
    "Resolver",
    "Role",
    "Scenario",
    "ScenarioReport",
    "SecretStore",
    "Status",
    "Transaction",
    "ValidatorPackage",
    "execute",
    "materialize",
    "run_scenario",
    "run_suite",
]
