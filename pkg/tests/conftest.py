import hashlib

import pytest

from provledger.core import PublicKey
from provledger.workload import WorkloadSpec, build_chain, generate_workload

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def make_key(label: str) -> PublicKey:
    return PublicKey(hashlib.sha256(f"test-key:{label}".encode()).digest())


@pytest.fixture(scope="session")
def small_chain():
    """(workload, ledger, store) for a 60-block, 12-case workload."""
    workload = generate_workload(WorkloadSpec(12, 60, 10, seed=11))
    ledger, store = build_chain(workload)
    return workload, ledger, store


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
