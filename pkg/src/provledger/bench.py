"""Timing experiments: retrieval, sealing overhead, per-kind apply time.

All timings use ``time.perf_counter_ns`` with the garbage collector paused
around the measured region, after one warm-up pass.
"""
from __future__ import annotations

import csv
import gc
import json
import random
import statistics
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .contracts import ContractState, apply_transaction
from .core import PublicKey, Transaction, TxKind, digest
from .extraction import (Method, extract_brute_force, extract_offchain_verified,
                         extract_smart_brute_force)
from .ledger import Ledger, SealingConfig
from .rbac import Role, Stage
from .records import ProvenanceRecord, RecordKind
from .workload import BASE_TIME_MS, WorkloadSpec, build_chain, generate_workload

CSV_COLUMNS = ["experiment", "blocks", "cases", "method_or_kind", "samples",
               "mean_ns", "median_ns", "q1_ns", "q3_ns", "max_ns"]
DEFAULT_BLOCKS_GRID = (1000, 2500, 5000, 7500, 10000)
DEFAULT_CASES_GRID = (100, 500, 1000)


@dataclass(frozen=True)
class BenchRow:
    experiment: str
    blocks: int | None
    cases: int | None
    method_or_kind: str
    samples: int
    mean_ns: float
    median_ns: float
    q1_ns: float
    q3_ns: float
    max_ns: float
    values: tuple[int, ...] = field(default=(), compare=False, repr=False)

    @property
    def iqr_ns(self) -> float:
        return self.q3_ns - self.q1_ns

    @classmethod
    def from_samples(cls, experiment: str, blocks: int | None, cases: int | None,
                     label: str, values: Sequence[int]) -> "BenchRow":
        if not values:
            raise ValueError(f"no samples for {label}")
        if len(values) > 1:
            q1, med, q3 = statistics.quantiles(values, n=4, method="inclusive")
        else:
            q1 = med = q3 = float(values[0])
        return cls(experiment, blocks, cases, label, len(values), statistics.fmean(values),
                   med, q1, q3, float(max(values)), tuple(values))

    def csv_row(self) -> list[str]:
        def num(x: float) -> str:
            return f"{x:.1f}"
        return [self.experiment, "" if self.blocks is None else str(self.blocks),
                "" if self.cases is None else str(self.cases), self.method_or_kind,
                str(self.samples), num(self.mean_ns), num(self.median_ns), num(self.q1_ns),
                num(self.q3_ns), num(self.max_ns)]


def write_csv(rows: Iterable[BenchRow], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(row.csv_row())


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def read_rows(path: str | Path) -> list[BenchRow]:
    """Rows back from a CSV written by ``write_csv`` (without raw samples)."""
    def opt_int(s: str) -> int | None:
        return int(s) if s else None
    return [BenchRow(d["experiment"], opt_int(d["blocks"]), opt_int(d["cases"]),
                     d["method_or_kind"], int(d["samples"]), float(d["mean_ns"]),
                     float(d["median_ns"]), float(d["q1_ns"]), float(d["q3_ns"]),
                     float(d["max_ns"]))
            for d in read_csv(path)]


@contextmanager
def _no_gc():
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()


# --- retrieval ----------------------------------------------------------------

@dataclass(frozen=True)
class RetrievalSample:
    case: str
    method: Method
    elapsed_ns: int
    blocks_scanned: int
    records: int
    verified: bool | None


def retrieval_cell(blocks: int, cases: int, reps: int, seed: int,
                   tx_per_block: int = 10) -> list[RetrievalSample]:
    """Build one chain and time every method on ``reps`` sampled cases."""
    workload = generate_workload(WorkloadSpec(cases, blocks, tx_per_block, seed))
    ledger, store = build_chain(workload)
    rng = random.Random(f"{seed}:{blocks}:{cases}")
    sampled = [rng.choice(workload.cases) for _ in range(reps)]
    runs = (
        (Method.BRUTE_FORCE, lambda c: extract_brute_force(ledger, c)),
        (Method.SMART_BRUTE_FORCE, lambda c: extract_smart_brute_force(ledger, c)),
        (Method.OFFCHAIN_VERIFIED, lambda c: extract_offchain_verified(store, ledger, c)),
    )
    for _, fn in runs:  # warm-up
        fn(sampled[0])
    out = []
    with _no_gc():
        for case in sampled:
            for method, fn in runs:
                r = fn(case)
                out.append(RetrievalSample(
                    case, method, r.elapsed_ns, r.blocks_scanned, len(r.records),
                    None if r.verification is None else r.verification.verified))
    return out


def retrieval_rows(blocks: int, cases: int, samples: Sequence[RetrievalSample]) -> list[BenchRow]:
    return [BenchRow.from_samples("retrieval", blocks, cases, m.value,
                                  [s.elapsed_ns for s in samples if s.method is m])
            for m in Method]


def run_retrieval_benchmark(blocks_grid: Sequence[int] = DEFAULT_BLOCKS_GRID,
                            cases_grid: Sequence[int] = DEFAULT_CASES_GRID,
                            reps: int = 30, seed: int = 0,
                            tx_per_block: int = 10) -> list[BenchRow]:
    if not blocks_grid or not cases_grid:
        raise ValueError("grids must be non-empty")
    rows = []
    for cases in cases_grid:
        for blocks in blocks_grid:
            samples = retrieval_cell(blocks, cases, reps, seed, tx_per_block)
            rows.extend(retrieval_rows(blocks, cases, samples))
    return rows


# --- sealing overhead ---------------------------------------------------------------

def _loaded_ledger(workload, with_case_roots: bool) -> Ledger:
    ledger, _ = build_chain(replace(workload, transactions=[]), with_case_roots=with_case_roots)
    for tx in workload.transactions:
        ledger.submit_transaction(tx)
    return ledger


def seal_timings(spec: WorkloadSpec, with_case_roots: bool) -> list[int]:
    """Per-block sealing times for one workload (genesis excluded)."""
    ledger = _loaded_ledger(generate_workload(spec), with_case_roots)
    times = []
    with _no_gc():
        while ledger.mempool:
            t0 = time.perf_counter_ns()
            ledger.seal_block()
            times.append(time.perf_counter_ns() - t0)
    return times


def paired_seal_timings(spec: WorkloadSpec) -> tuple[list[int], list[int]]:
    """Seal the same workload with and without case roots in lockstep.

    Block i of both chains is sealed back to back, alternating which goes
    first, so slow drift on the host hits both configurations equally.
    """
    workload = generate_workload(spec)
    ledgers = {True: _loaded_ledger(workload, True), False: _loaded_ledger(workload, False)}
    times: dict[bool, list[int]] = {True: [], False: []}
    clock = time.perf_counter_ns
    with _no_gc():
        i = 0
        while ledgers[True].mempool:
            for toggle in ((True, False) if i % 2 == 0 else (False, True)):
                t0 = clock()
                ledgers[toggle].seal_block()
                times[toggle].append(clock() - t0)
            i += 1
    return times[True], times[False]


def run_overhead_benchmark(spec: WorkloadSpec, reps: int = 5) -> list[BenchRow]:
    warm = WorkloadSpec(spec.num_cases, max(1, min(50, spec.num_blocks)), spec.tx_per_block, spec.seed)
    paired_seal_timings(warm)
    with_roots: list[int] = []
    without: list[int] = []
    for _ in range(reps):
        w, wo = paired_seal_timings(spec)
        with_roots.extend(w)
        without.extend(wo)
    return [
        BenchRow.from_samples("overhead", spec.num_blocks, spec.num_cases, "with_case_roots", with_roots),
        BenchRow.from_samples("overhead", spec.num_blocks, spec.num_cases, "without_case_roots", without),
    ]


# --- per-kind transaction time ------------------------------------------------------

def _txtime_pass(reps: int, seed: int) -> dict[str, list[int]]:
    def key(label: str) -> PublicKey:
        return PublicKey(digest(f"txtime:{seed}:{label}".encode()))

    admin = key("admin")
    served: dict[str, list[ProvenanceRecord]] = {}
    state = ContractState(admin_keys=[admin.fingerprint],
                          provenance_source=lambda c: list(served.get(c, ())))
    le, dfe, inv = key("le"), key("dfe"), key("inv")
    timings: dict[str, list[int]] = {k.value: [] for k in TxKind}
    timings["Write"], timings["Read"] = [], []
    log: list[bytes] = []
    clock = time.perf_counter_ns
    ts = BASE_TIME_MS

    def run(tx: Transaction, block: int) -> None:
        t0 = clock()
        effects = apply_transaction(state, tx, block)
        timings[tx.kind.value].append(clock() - t0)
        if tx.case is not None:
            served.setdefault(tx.case, []).extend(effects.records)

    for k, role in ([(le, Role.LAW_ENFORCEMENT), (dfe, Role.DIGITAL_FORENSICS_EXAMINER),
                                   (inv, Role.INVESTIGATOR)]):
        run(Transaction(TxKind.SETUP, admin, ts, subject=k, role=role.value), 0)
    for i in range(reps):
        ts += 10
        run(Transaction(TxKind.SETUP, admin, ts, subject=key(f"user-{i}"),
                        role=Role.LEGAL_COUNSEL.value), i)
        case = f"BENCH-{i:06d}"
        stage = Stage.INVESTIGATION.value
        run(Transaction(TxKind.INITIAL_UPLOAD, le, ts, case=case,
                        content=digest(case.encode()), stage=stage), i)
        a = Transaction(TxKind.FILE_UPLOAD, le, ts + 1, case=case, file_id="A",
                        content=digest(b"A" + case.encode()), current_stage=stage)
        b = Transaction(TxKind.FILE_UPLOAD, le, ts + 2, case=case, file_id="B",
                        content=digest(b"B" + case.encode()), current_stage=stage)
        run(a, i)
        run(b, i)
        parents = tuple(state.case_state(case).token_list)
        run(Transaction(TxKind.ANALYSIS, dfe, ts + 3, case=case, parents=parents,
                        current_stage=stage), i)
        run(Transaction(TxKind.ACC_REQ, inv, ts + 4, case=case, resource="ReadEvidence",
                        current_stage=stage), i)
        run(Transaction(TxKind.PROVENANCE, le, ts + 5, case=case, current_stage=stage), i)
        run(Transaction(TxKind.STAGE, le, ts + 6, case=case, stage=Stage.ANALYSIS.value,
                        current_stage=stage), i)

        # Logging-only baselines: append one opaque record, read one back.
        t0 = clock()
        rec = ProvenanceRecord(RecordKind.TIMESTAMP, case, i, digest(case.encode()), {"time": ts})
        log.append(rec.line)
        timings["Write"].append(clock() - t0)
        t0 = clock()
        json.loads(log[i])
        timings["Read"].append(clock() - t0)
    return timings


def run_txtime_benchmark(spec: WorkloadSpec | None = None, reps: int = 100) -> list[BenchRow]:
    seed = spec.seed if spec is not None else 0
    _txtime_pass(min(reps, 20), seed)
    with _no_gc():
        timings = _txtime_pass(reps, seed)
    order = [k.value for k in TxKind] + ["Write", "Read"]
    return [BenchRow.from_samples("txtime", None, None, label, timings[label]) for label in order]
