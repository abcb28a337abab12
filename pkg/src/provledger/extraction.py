"""The three ways of pulling a case's provenance history.

Each returns the records together with how many block bodies were read and
the elapsed monotonic time, so benchmarks only have to aggregate.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass

from .errors import UnknownCase
from .ledger import Ledger
from .records import ProvenanceRecord
from .store import RecordStore, VerificationReport


class Method(enum.Enum):
    BRUTE_FORCE = "brute"
    SMART_BRUTE_FORCE = "smart"
    OFFCHAIN_VERIFIED = "offchain"


@dataclass(frozen=True)
class ExtractionResult:
    case: str
    records: list[ProvenanceRecord]
    method: Method
    blocks_scanned: int
    elapsed_ns: int
    verification: VerificationReport | None = None

    @property
    def compromised(self) -> bool:
        return self.verification is not None and not self.verification.verified


def _scan(ledger: Ledger, case: str, start: int, method: Method, t0: int) -> ExtractionResult:
    blocks = ledger.blocks
    end = len(blocks)  # chain prefix visible at call time
    found = [r for i in range(start, end) for r in blocks[i].records if r.case == case]
    return ExtractionResult(case, found, method, end - start, time.perf_counter_ns() - t0)


def extract_brute_force(ledger: Ledger, case: str) -> ExtractionResult:
    t0 = time.perf_counter_ns()
    return _scan(ledger, case, 0, Method.BRUTE_FORCE, t0)


def extract_smart_brute_force(ledger: Ledger, case: str) -> ExtractionResult:
    t0 = time.perf_counter_ns()
    start = ledger.contracts.case_state(case).initial_block_number
    return _scan(ledger, case, start, Method.SMART_BRUTE_FORCE, t0)


def extract_offchain_verified(store: RecordStore, ledger: Ledger, case: str) -> ExtractionResult:
    t0 = time.perf_counter_ns()
    if case not in store:
        raise UnknownCase(case)
    records = store.fetch_case_records(case)
    chain_root, _ = ledger.latest_case_root(case)
    report = store.verify_case_records(case, chain_root)
    if not report.verified:
        # Locating the divergence is diagnostic work done only on failure.
        report = store.verify_case_records(case, chain_root, ledger.case_root_history(case))
    return ExtractionResult(case, records, Method.OFFCHAIN_VERIFIED, 0,
                            time.perf_counter_ns() - t0, report)


def extract(ledger: Ledger, store: RecordStore | None, case: str,
            method: Method | str) -> ExtractionResult:
    method = Method(method)
    if method is Method.BRUTE_FORCE:
        return extract_brute_force(ledger, case)
    if method is Method.SMART_BRUTE_FORCE:
        return extract_smart_brute_force(ledger, case)
    if store is None:
        raise ValueError("off-chain extraction needs a record store")
    return extract_offchain_verified(store, ledger, case)
