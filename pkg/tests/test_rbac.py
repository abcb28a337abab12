import json

import pytest
from hypothesis import given, settings, strategies as st

from provledger.core import Transaction, TxKind
from provledger.errors import AlreadyRegistered, InvalidPolicy
from provledger.rbac import (Outcome, PolicyMatrix, Right, Role, Stage, UserRegistry,
                             retrieve_access_info)

from conftest import make_key


def acc_req(sender, stage: str) -> Transaction:
    return Transaction(TxKind.ACC_REQ, sender, 1, case="C", resource="ReadEvidence",
                       current_stage=stage)


@pytest.fixture
def policy():
    return PolicyMatrix.default()


def test_default_policy_affidavit_constraint(policy):
    s = Stage.AFFIDAVIT_WARRANT
    assert Right.READ_EVIDENCE in policy.rights(s, Role.LAW_ENFORCEMENT)
    assert Right.READ_EVIDENCE in policy.rights(s, Role.DIGITAL_FORENSICS_EXAMINER)
    assert Right.READ_EVIDENCE not in policy.rights(s, Role.INVESTIGATOR)
    assert Right.READ_EVIDENCE not in policy.rights(s, Role.LEGAL_COUNSEL)


def test_default_policy_is_total_and_round_trips(policy):
    assert all(isinstance(policy.rights(s, r), frozenset) for s in Stage for r in Role)
    back = PolicyMatrix.from_dict(json.loads(json.dumps(policy.to_dict())))
    assert all(back.rights(s, r) == policy.rights(s, r) for s in Stage for r in Role)


def test_register_and_lookup():
    reg = UserRegistry()
    k = make_key("inv")
    reg.register(k, Role.INVESTIGATOR)
    assert reg.role_of(k) is Role.INVESTIGATOR and k in reg
    with pytest.raises(AlreadyRegistered):
        reg.register(k, Role.LEGAL_COUNSEL)


def test_registered_user_gets_rights_end_to_end(policy):
    reg = UserRegistry()
    k = make_key("le")
    reg.register(k, Role.LAW_ENFORCEMENT)
    d = retrieve_access_info(acc_req(k, "AffidavitWarrant"), reg, policy, Stage.AFFIDAVIT_WARRANT)
    assert d.outcome is Outcome.GRANTED
    assert d.rights == policy.rights(Stage.AFFIDAVIT_WARRANT, Role.LAW_ENFORCEMENT)
    assert d.allows(Right.READ_EVIDENCE)


def test_investigator_lacks_evidence_at_affidavit(policy):
    reg = UserRegistry()
    k = make_key("inv")
    reg.register(k, Role.INVESTIGATOR)
    d = retrieve_access_info(acc_req(k, "AffidavitWarrant"), reg, policy, Stage.AFFIDAVIT_WARRANT)
    assert not d.allows(Right.READ_EVIDENCE)


def test_invalid_declared_stage(policy):
    reg = UserRegistry()
    k = make_key("le")
    reg.register(k, Role.LAW_ENFORCEMENT)
    d = retrieve_access_info(acc_req(k, "Trial"), reg, policy, Stage.INVESTIGATION)
    assert d.outcome is Outcome.INVALID_STAGE and d.rights == frozenset()


def test_unregistered_sender_denied(policy):
    d = retrieve_access_info(acc_req(make_key("x"), "Investigation"), UserRegistry(), policy,
                             Stage.INVESTIGATION)
    assert d.outcome is Outcome.ACCESS_DENIED


def test_empty_cell_reports_no_access_rights(policy):
    reg = UserRegistry()
    k = make_key("dfe")
    reg.register(k, Role.DIGITAL_FORENSICS_EXAMINER)
    d = retrieve_access_info(acc_req(k, "CaseClosed"), reg, policy, Stage.CASE_CLOSED)
    assert d.outcome is Outcome.NO_ACCESS_RIGHTS


def test_stage_mismatch_dominates_unregistered(policy):
    # unregistered and mismatched -> the stage check comes first
    d = retrieve_access_info(acc_req(make_key("x"), "Analysis"), UserRegistry(), policy,
                             Stage.INVESTIGATION)
    assert d.outcome is Outcome.INVALID_STAGE


@settings(max_examples=150, deadline=None)
@given(actual=st.sampled_from(list(Stage)), other=st.sampled_from(list(Stage)),
       role=st.sampled_from(list(Role)),
       rights=st.frozensets(st.sampled_from(list(Right))))
def test_other_stage_cells_never_change_outcome(actual, other, role, rights):
    base = PolicyMatrix.default()
    reg = UserRegistry()
    k = make_key("u")
    reg.register(k, role)
    tx = acc_req(k, actual.value)
    before = retrieve_access_info(tx, reg, base, actual)
    if other is not actual:
        after = retrieve_access_info(tx, reg, base.with_cell(other, role, rights), actual)
        assert after == before
    # purity
    assert retrieve_access_info(tx, reg, base, actual) == before


def test_invalid_policy_names():
    with pytest.raises(InvalidPolicy):
        PolicyMatrix.from_dict({"Trial": {}})
    with pytest.raises(InvalidPolicy):
        PolicyMatrix.from_dict({"Analysis": {"Judge": []}})
    with pytest.raises(InvalidPolicy):
        PolicyMatrix.from_dict({"Analysis": {"Investigator": ["Fly"]}})


def test_missing_cells_are_empty():
    p = PolicyMatrix.from_dict({"Analysis": {"Investigator": ["ReadEvidence"]}})
    assert p.rights(Stage.ANALYSIS, Role.INVESTIGATOR) == {Right.READ_EVIDENCE}
    assert p.rights(Stage.CASE_CLOSED, Role.INVESTIGATOR) == frozenset()


def test_forward_adjacent_option():
    p = PolicyMatrix.from_dict({"options": {"forward_adjacent_only": True}})
    assert p.allows_transition(Stage.INVESTIGATION, Stage.ANALYSIS)
    assert not p.allows_transition(Stage.INVESTIGATION, Stage.CASE_CLOSED)
    assert not p.allows_transition(Stage.ANALYSIS, Stage.INVESTIGATION)
    assert PolicyMatrix.default().allows_transition(Stage.ANALYSIS, Stage.INVESTIGATION)


def test_stage_parse_and_order():
    assert [s.ordinal for s in Stage] == list(range(7))
    assert Stage.parse("Trial") is None and Stage.parse(None) is None
    assert Stage.parse("JudgementDay") is Stage.JUDGEMENT_DAY


def test_registry_export():
    reg = UserRegistry()
    k = make_key("lc")
    reg.register(k, Role.LEGAL_COUNSEL)
    assert reg.to_list() == [{"fingerprint": k.fingerprint.hex(), "role": "LegalCounsel"}]
