"""
Scripted scenarios
==================

The harness runs JSON scenarios (honest and adversarial) with a seeded
random source and a mock clock, so each run is byte-for-byte repeatable.
"""

from movsc.harness import BUILTIN_SUITE, Scenario, run_scenario

for name in BUILTIN_SUITE:
    report = run_scenario(Scenario.builtin(name))
    errors = ", ".join(sorted(report.errors_on_chain())) or "-"
    print(f"{name:28s} {'PASS' if report.passed else 'FAIL'}  errors on chain: {errors}")

# A scenario is plain data.
tiny = Scenario.from_dict({
    "name": "tiny",
    "seed": 1,
    "actors": [{"name": "alice", "role": "client"}, {"name": "bob", "role": "client"}],
    "data": {"d": {"text": "the same bytes"}},
    "steps": [
        {"id": "first", "actor": "alice", "do": "certify", "cert": "h", "data": "d"},
        {"id": "second", "actor": "bob", "do": "certify", "cert": "h2", "data": "d",
         "expect_error": "AlreadyCertified"},
    ],
    "expect": [{"check": "status", "cert": "h", "equals": "certified"}],
})
print()
print(run_scenario(tiny).summary())

# Same seed, same chain.
a = run_scenario(Scenario.builtin("tampered_data"))
b = run_scenario(Scenario.builtin("tampered_data"))
print("\nrepeatable:", a.ledger.export_json() == b.ledger.export_json())
