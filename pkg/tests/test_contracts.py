import dataclasses
import hashlib
import json
import random
import struct
from importlib import resources

import pytest

from provledger.contracts import ContractState, apply_transaction
from provledger.core import Transaction, TxKind
from provledger.errors import CaseExists, UnknownCase, UnregisteredSender
from provledger.ledger import Ledger, SealingConfig
from provledger.rbac import Role, Stage
from provledger.records import RecordKind
from provledger.sealing import X25519Sealer, decode_receipt, generate_keypair
from provledger.workload import WorkloadSpec, generate_workload

from conftest import make_key

ADMIN, LE, DFE, INV = (make_key(x) for x in ("admin", "le", "dfe", "inv"))


def content(s: str) -> bytes:
    return hashlib.sha256(s.encode()).digest()


def setup_state(**kw) -> ContractState:
    state = ContractState(admin_keys=[ADMIN.fingerprint], **kw)
    for k, role in ((LE, Role.LAW_ENFORCEMENT), (DFE, Role.DIGITAL_FORENSICS_EXAMINER),
                    (INV, Role.INVESTIGATOR)):
        apply_transaction(state, Transaction(TxKind.SETUP, ADMIN, 1, subject=k, role=role.value), 0)
    return state


def initial(case="C1", stage="Investigation", sender=LE, t=100):
    return Transaction(TxKind.INITIAL_UPLOAD, sender, t, case=case, content=content(case), stage=stage)


def upload(file_id, t, case="C1", sender=LE, stage="Investigation"):
    return Transaction(TxKind.FILE_UPLOAD, sender, t, case=case, file_id=file_id,
                       content=content(file_id), current_stage=stage)


def test_setup_emits_client_info_and_non_admin_is_denied():
    state = ContractState(admin_keys=[ADMIN.fingerprint])
    ok = apply_transaction(state, Transaction(TxKind.SETUP, ADMIN, 1, subject=LE, role="LawEnforcement"), 0)
    assert [r.kind for r in ok.records] == [RecordKind.CLIENT_INFO]
    bad = apply_transaction(state, Transaction(TxKind.SETUP, LE, 2, subject=INV, role="Investigator"), 0)
    assert bad.denied and [r.kind for r in bad.records] == [RecordKind.ACCESS_VALIDITY]
    assert state.registry.role_of(INV) is None


def test_initial_upload_creates_case():
    state = setup_state()
    eff = apply_transaction(state, initial(), 4)
    assert [r.kind for r in eff.records] == [RecordKind.CASE_NUMBER, RecordKind.TIMESTAMP,
                                             RecordKind.INITIAL_BLOCK_NUMBER, RecordKind.CURRENT_STAGE]
    assert len(eff.receipts) == 1
    snap = state.case_state("C1")
    assert snap.current_stage is Stage.INVESTIGATION and snap.token_list == ()
    assert snap.initial_block_number == 4 and snap.timestamp == 100
    assert "C1" in state.case_list and state.stages["C1"] is Stage.INVESTIGATION
    with pytest.raises(CaseExists):
        apply_transaction(state, initial(t=101), 5)


def test_initial_upload_from_unregistered_sender_is_an_error():
    state = setup_state()
    with pytest.raises(UnregisteredSender):
        apply_transaction(state, initial(sender=make_key("stranger")), 1)
    assert "C1" not in state.cases


def test_file_upload_to_unknown_case_changes_nothing():
    state = setup_state()
    before = state.canonical_bytes()
    with pytest.raises(UnknownCase):
        apply_transaction(state, upload("A", 5, case="nope"), 1)
    assert state.canonical_bytes() == before


def test_upload_and_analysis_build_token_list():
    state = setup_state()
    apply_transaction(state, initial(), 1)
    a = apply_transaction(state, upload("A", 101), 1)
    b = apply_transaction(state, upload("B", 102), 1)
    ta, tb = state.case_state("C1").token_list
    assert [r.kind for r in a.records] == [RecordKind.TOKEN_LIST, RecordKind.TYPE_OF_DATA_UPLOAD]
    assert a.records[1].payload["type"] == "raw"
    an = apply_transaction(state, Transaction(TxKind.ANALYSIS, DFE, 103, case="C1", parents=(ta, tb),
                                              current_stage="Investigation"), 2)
    tokens = state.case_state("C1").token_list
    assert len(tokens) == 3 and tokens[:2] == (ta, tb)
    ab = state.tokens.graph("C1").nodes[tokens[2]]
    assert ab.parents == (ta, tb)
    assert [r.kind for r in an.records] == [RecordKind.TOKEN_DEPENDENCY, RecordKind.TYPE_OF_DATA_UPLOAD]
    assert an.records[1].payload["type"] == "analyzed"
    assert b.receipts and an.receipts


def test_acc_req_from_unregistered_key_is_logged_and_harmless():
    state = setup_state()
    apply_transaction(state, initial(), 1)
    before = state.canonical_bytes()
    eff = apply_transaction(state, Transaction(TxKind.ACC_REQ, make_key("x"), 200, case="C1",
                                               resource="ReadEvidence", current_stage="Investigation"), 2)
    assert eff.denied
    kinds = [r.kind for r in eff.records]
    assert kinds == [RecordKind.ACCESS_REQUEST, RecordKind.ACCESS_VALIDITY]
    assert eff.records[1].payload["outcome"] == "access_denied"
    assert eff.records[1].payload["allowed"] is False
    assert state.canonical_bytes() == before


def test_denied_upload_does_not_mint():
    state = setup_state()
    apply_transaction(state, initial(stage="AffidavitWarrant"), 1)
    eff = apply_transaction(state, upload("A", 5, sender=INV, stage="AffidavitWarrant"), 1)
    assert eff.denied and eff.records[0].payload["outcome"] == "insufficient_rights"
    assert state.case_state("C1").token_list == () and len(state.tokens.graph("C1")) == 0


def test_stage_change_updates_both_mirrors():
    state = setup_state()
    apply_transaction(state, initial(), 1)
    eff = apply_transaction(state, Transaction(TxKind.STAGE, LE, 300, case="C1", stage="Analysis",
                                               current_stage="Investigation"), 3)
    assert eff.records[0].kind is RecordKind.STAGE_CHANGE
    assert eff.records[0].payload == {"from": "Investigation", "to": "Analysis"}
    assert state.case_state("C1").current_stage is Stage.ANALYSIS
    assert state.stages["C1"] is Stage.ANALYSIS
    # the old stage is no longer accepted
    stale = apply_transaction(state, upload("A", 301), 3)
    assert stale.denied and stale.decision.outcome.value == "invalid_stage"


def test_provenance_serves_case_records():
    served = []
    state = setup_state(provenance_source=lambda c: list(served))
    served.extend(apply_transaction(state, initial(), 1).records)
    eff = apply_transaction(state, Transaction(TxKind.PROVENANCE, LE, 400, case="C1",
                                               current_stage="Investigation"), 2)
    assert eff.response == served
    assert eff.records[0].kind is RecordKind.ACCESS_VALIDITY and eff.records[0].payload["allowed"]


def test_receipts_open_with_recipient_key():
    priv, pub = generate_keypair()
    state = ContractState(sealer=X25519Sealer())
    apply_transaction(state, Transaction(TxKind.SETUP, pub, 1, subject=pub, role="LawEnforcement"), 0)
    eff = apply_transaction(state, initial(sender=pub), 1)
    t, data, case = decode_receipt(X25519Sealer().open(eff.receipts[0], priv))
    assert (t, data, case) == (100, content("C1"), "C1")
    other, _ = generate_keypair()
    with pytest.raises(Exception):
        X25519Sealer().open(eff.receipts[0], other)


# --- independent replay oracle ------------------------------------------------

def _oracle_token(case, tx):
    if tx.kind is TxKind.FILE_UPLOAD:
        c, f = case.encode(), tx.file_id.encode()
        body = (b"\x00" + struct.pack(">I", len(c)) + c + struct.pack(">I", len(f)) + f + tx.content)
    else:
        body = b"\x01" + b"".join(tx.parents)
    return hashlib.sha256(b"\x03" + body + struct.pack(">IQ", 8, tx.timestamp)).digest()


def oracle_replay(admin_fp, setup, txs, tx_per_block):
    raw = json.loads(resources.files("provledger.data").joinpath("default_policy.json").read_text())
    need = {TxKind.FILE_UPLOAD: "UploadFile", TxKind.ANALYSIS: "UploadAnalysis",
            TxKind.ACC_REQ: "RequestAccess", TxKind.STAGE: "ChangeStage",
            TxKind.PROVENANCE: "ExtractProvenance"}
    roles, cases = {}, {}
    for tx in setup:
        if tx.sender.fingerprint == admin_fp and tx.subject.fingerprint not in roles:
            roles[tx.subject.fingerprint] = tx.role
    for i, tx in enumerate(txs):
        block = 1 + i // tx_per_block
        role = roles.get(tx.sender.fingerprint)
        c = cases.get(tx.case)
        if tx.kind is TxKind.INITIAL_UPLOAD:
            if c is None and role is not None:
                cases[tx.case] = {"stage": tx.stage, "tokens": [], "block": block}
            continue
        if c is None:
            continue
        if tx.kind in (TxKind.FILE_UPLOAD, TxKind.ANALYSIS):
            tok = _oracle_token(tx.case, tx)
            if tok in c["tokens"] or any(p not in c["tokens"] for p in tx.parents):
                continue
        if tx.current_stage != c["stage"] or role is None:
            continue
        if need[tx.kind] not in raw[c["stage"]].get(role, []):
            continue
        if tx.kind in (TxKind.FILE_UPLOAD, TxKind.ANALYSIS):
            c["tokens"].append(tok)
        elif tx.kind is TxKind.STAGE:
            c["stage"] = tx.stage
    return cases


@pytest.mark.parametrize("seed", range(8))
def test_random_workload_matches_sequential_oracle(seed):
    rng = random.Random(seed)
    w = generate_workload(WorkloadSpec(5, 10, 10, seed=seed))
    senders = [k for k, _ in w.users] + [make_key(f"stranger{seed}")]
    txs = []
    for tx in w.transactions:  # perturb senders and declared stages to exercise denials
        if tx.kind is not TxKind.INITIAL_UPLOAD and rng.random() < 0.3:
            tx = dataclasses.replace(tx, sender=rng.choice(senders))
        if tx.kind is not TxKind.INITIAL_UPLOAD and rng.random() < 0.1:
            tx = dataclasses.replace(tx, current_stage=rng.choice([s.value for s in Stage]))
        txs.append(tx)
    state = ContractState(admin_keys=[w.admin.fingerprint])
    ledger = Ledger(state, None, SealingConfig(10))
    for tx in w.setup:
        ledger.submit_transaction(tx)
    ledger.seal_block(limit=len(w.setup))
    for tx in txs:
        ledger.submit_transaction(tx)
    ledger.seal_all()

    expected = oracle_replay(w.admin.fingerprint, w.setup, txs, 10)
    assert set(state.cases) == set(expected)
    for case, e in expected.items():
        snap = state.case_state(case)
        assert snap.current_stage.value == e["stage"]
        assert list(snap.token_list) == e["tokens"]
        assert snap.initial_block_number == e["block"]
        assert state.stages[case] is snap.current_stage
        assert set(snap.token_list) == set(state.tokens.graph(case).nodes)
