import dataclasses

import pytest

from provledger.core import TxKind
from provledger.errors import InfeasibleSpec
from provledger.workload import WorkloadSpec, build_chain, generate_workload


def test_minimal_spec_is_one_initial_upload():
    w = generate_workload(WorkloadSpec(1, 1, 1, seed=3))
    assert [t.kind for t in w.transactions] == [TxKind.INITIAL_UPLOAD]
    assert w.cases == ["CASE-00001"]


def test_generation_is_deterministic():
    spec = WorkloadSpec(7, 30, 10, seed=9)
    a, b = generate_workload(spec), generate_workload(spec)
    assert [t.id for t in a.transactions] == [t.id for t in b.transactions]
    assert [t.id for t in a.setup] == [t.id for t in b.setup]
    other = generate_workload(dataclasses.replace(spec, seed=10))
    assert [t.id for t in other.transactions] != [t.id for t in a.transactions]


def test_counts_for_hundred_cases_thousand_blocks():
    w = generate_workload(WorkloadSpec(100, 1000, 10, seed=0))
    assert len(w.transactions) == 10_000
    initial = [t for t in w.transactions if t.kind is TxKind.INITIAL_UPLOAD]
    assert len(initial) == 100 and len(set(w.cases)) == 100
    first_seen: dict[str, TxKind] = {}
    for t in w.transactions:
        first_seen.setdefault(t.case, t.kind)
    assert set(first_seen) == set(w.cases)
    assert all(k is TxKind.INITIAL_UPLOAD for k in first_seen.values())
    ts = [t.timestamp for t in w.transactions]
    assert ts == sorted(ts)


@pytest.mark.parametrize("spec", [
    WorkloadSpec(0, 10),
    WorkloadSpec(5, 0),
    WorkloadSpec(11, 1, 10),
    WorkloadSpec(2, 2, tx_mix={TxKind.INITIAL_UPLOAD: 1.0}),
    WorkloadSpec(2, 2, tx_mix={TxKind.FILE_UPLOAD: 0.0}),
])
def test_infeasible_specs(spec):
    with pytest.raises(InfeasibleSpec):
        generate_workload(spec)


def test_analysis_parents_exist_once_sealed():
    w = generate_workload(WorkloadSpec(4, 80, 10, seed=2))
    ledger, _ = build_chain(w)
    assert ledger.rejected == []
    analyses = [t for t in w.transactions if t.kind is TxKind.ANALYSIS]
    assert analyses
    for t in analyses:
        graph = ledger.contracts.tokens.graph(t.case)
        assert all(p in graph.nodes for p in t.parents)


def test_block_count_matches_workload(small_chain):
    w, ledger, _ = small_chain
    assert len(ledger.blocks) == w.spec.num_blocks + 1  # genesis holds the user setup
    assert all(len(b.transactions) == w.spec.tx_per_block for b in ledger.blocks[1:])
