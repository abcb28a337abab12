"""Contract state machines and transaction dispatch.

``ContractState`` bundles the tokenized contract (cases and their token
DAGs), the access-control contract (case list, stage mirror, user registry,
policy) and the hooks the provenance contract needs to serve extractions.
``apply_transaction`` is the only mutator; it validates a transaction fully
before touching any state, so a raised error always leaves state unchanged.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .core import PublicKey, Transaction, TxKind, digest
from .errors import CaseExists, MalformedTransaction, UnknownCase, UnregisteredSender
from .rbac import (AccessDecision, Outcome, PolicyMatrix, Right, Role, Stage, UserRegistry,
                   retrieve_access_info)
from .records import ProvenanceRecord, RecordKind
from .sealing import IdentitySealer, SealedPayload, Sealer, encode_receipt
from .tokens import TokenRegistry

REQUIRED_RIGHT = {
    TxKind.FILE_UPLOAD: Right.UPLOAD_FILE,
    TxKind.ANALYSIS: Right.UPLOAD_ANALYSIS,
    TxKind.ACC_REQ: Right.REQUEST_ACCESS,
    TxKind.STAGE: Right.CHANGE_STAGE,
    TxKind.PROVENANCE: Right.EXTRACT_PROVENANCE,
}


@dataclass(frozen=True)
class CaseContract:
    case_number: str
    timestamp: int
    initial_block_number: int
    current_stage: Stage
    token_list: tuple[bytes, ...]
    roles_involved: frozenset[Role]

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_number": self.case_number,
            "timestamp": self.timestamp,
            "initial_block_number": self.initial_block_number,
            "current_stage": self.current_stage.value,
            "token_list": [t.hex() for t in self.token_list],
            "roles_involved": sorted(r.value for r in self.roles_involved),
        }


@dataclass
class _Case:
    case_number: str
    timestamp: int
    initial_block_number: int
    current_stage: Stage
    token_list: list[bytes] = field(default_factory=list)
    roles_involved: set[Role] = field(default_factory=set)

    def snapshot(self) -> CaseContract:
        return CaseContract(self.case_number, self.timestamp, self.initial_block_number,
                            self.current_stage, tuple(self.token_list),
                            frozenset(self.roles_involved))


@dataclass
class Effects:
    records: list[ProvenanceRecord] = field(default_factory=list)
    receipts: list[SealedPayload] = field(default_factory=list)
    decision: AccessDecision | None = None
    denied: bool = False
    # Records served to a granted Provenance transaction.
    response: list[ProvenanceRecord] | None = None


class ContractState:
    def __init__(self, policy: PolicyMatrix | None = None, *,
                 admin_keys: Sequence[bytes] = (),
                 sealer: Sealer | None = None,
                 store_key: PublicKey | None = None,
                 provenance_source: Callable[[str], list[ProvenanceRecord]] | None = None):
        self.policy = policy or PolicyMatrix.default()
        # An empty admin list leaves registration open (bootstrap mode).
        self.admin_keys = frozenset(admin_keys)
        self.sealer = sealer or IdentitySealer()
        self.store_key = store_key
        self.provenance_source = provenance_source
        # tokenized contract
        self.cases: dict[str, _Case] = {}
        self.tokens = TokenRegistry()
        # access-control contract
        self.registry = UserRegistry()
        self.case_list: set[str] = set()
        self.stages: dict[str, Stage] = {}

    def case_state(self, case: str) -> CaseContract:
        try:
            return self.cases[case].snapshot()
        except KeyError:
            raise UnknownCase(case) from None

    def to_dict(self) -> dict[str, Any]:
        """Canonical export used for replay comparison."""
        return {
            "cases": {c: self.cases[c].snapshot().to_dict() for c in sorted(self.cases)},
            "case_list": sorted(self.case_list),
            "stages": {c: self.stages[c].value for c in sorted(self.stages)},
            "registry": self.registry.to_list(),
            "tokens": {c: self.tokens.graphs[c].to_dict() for c in sorted(self.tokens.graphs)},
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()


def _record(kind: RecordKind, tx: Transaction, block_index: int, **payload: Any) -> ProvenanceRecord:
    return ProvenanceRecord(kind, tx.case, block_index, tx.id, payload)


def _validity(tx: Transaction, block: int, right: Right | str, decision: AccessDecision,
              allowed: bool, outcome: str | None = None) -> ProvenanceRecord:
    return _record(RecordKind.ACCESS_VALIDITY, tx, block,
                   required=right.value if isinstance(right, Right) else right,
                   outcome=outcome or decision.outcome.value,
                   rights=sorted(r.value for r in decision.rights),
                   allowed=allowed,
                   sender=tx.sender.fingerprint.hex())


def _receipt(state: ContractState, to: PublicKey, time: int, data: bytes,
             case: str | None) -> SealedPayload:
    return state.sealer.seal(to, encode_receipt(time, data, case))


def apply_transaction(state: ContractState, tx: Transaction, block_index: int) -> Effects:
    missing = tx.missing_fields()
    if missing:
        raise MalformedTransaction(f"{tx.kind.value}: missing {', '.join(missing)}")
    if tx.kind is TxKind.SETUP:
        return _apply_setup(state, tx, block_index)
    if tx.kind is TxKind.INITIAL_UPLOAD:
        return _apply_initial_upload(state, tx, block_index)
    return _apply_gated(state, tx, block_index)


def _apply_setup(state: ContractState, tx: Transaction, block: int) -> Effects:
    try:
        role = Role(tx.role)
    except ValueError:
        raise MalformedTransaction(f"unknown role {tx.role!r}") from None
    assert tx.subject is not None
    if state.admin_keys and tx.sender.fingerprint not in state.admin_keys:
        decision = AccessDecision(Outcome.ACCESS_DENIED)
        return Effects([_validity(tx, block, "Setup", decision, False)], decision=decision,
                       denied=True)
    reg = state.registry.register(tx.subject, role)
    rec = _record(RecordKind.CLIENT_INFO, tx, block, fingerprint=reg.fingerprint.hex(),
                  role=role.value, public_key=tx.subject.hex())
    return Effects([rec])


def _apply_initial_upload(state: ContractState, tx: Transaction, block: int) -> Effects:
    case = tx.case
    assert case is not None and tx.content is not None
    if case in state.cases:
        raise CaseExists(case)
    stage = Stage.parse(tx.stage)
    if stage is None:
        raise MalformedTransaction(f"unknown stage {tx.stage!r}")
    role = state.registry.role_of(tx.sender)
    if role is None:
        raise UnregisteredSender(tx.sender.fingerprint.hex())

    state.cases[case] = _Case(case, tx.timestamp, block, stage, roles_involved={role})
    state.tokens.open_case(case)
    # AccessSC: the tokenized contract hands case and stage to access control.
    state.case_list.add(case)
    state.stages[case] = stage

    records = [
        _record(RecordKind.CASE_NUMBER, tx, block, case=case, data=tx.content.hex()),
        _record(RecordKind.TIMESTAMP, tx, block, time=tx.timestamp),
        _record(RecordKind.INITIAL_BLOCK_NUMBER, tx, block, block=block),
        _record(RecordKind.CURRENT_STAGE, tx, block, stage=stage.value,
                access_sc={"case": case, "stage": stage.value}),
    ]
    receipt = _receipt(state, tx.sender, tx.timestamp, tx.content, case)
    return Effects(records, [receipt])


def _apply_gated(state: ContractState, tx: Transaction, block: int) -> Effects:
    case = tx.case
    assert case is not None
    if case not in state.cases:
        raise UnknownCase(case)
    c = state.cases[case]
    right = REQUIRED_RIGHT[tx.kind]

    # Preconditions that make the transaction invalid regardless of who sent it.
    target: Stage | None = None
    if tx.kind is TxKind.FILE_UPLOAD:
        assert tx.file_id is not None and tx.content is not None
        state.tokens.check_original(case, tx.file_id, tx.content, tx.timestamp)
    elif tx.kind is TxKind.ANALYSIS:
        state.tokens.check_derived(case, tx.parents, tx.timestamp)
    elif tx.kind is TxKind.STAGE:
        target = Stage.parse(tx.stage)
        if target is None:
            raise MalformedTransaction(f"unknown target stage {tx.stage!r}")

    decision = retrieve_access_info(tx, state.registry, state.policy, state.stages[case])
    allowed = decision.allows(right)
    outcome = None
    if decision.granted and not allowed:
        outcome = "insufficient_rights"
    if allowed and target is not None and not state.policy.allows_transition(c.current_stage, target):
        allowed, outcome = False, "invalid_transition"

    if tx.kind is TxKind.ACC_REQ:
        records = [
            _record(RecordKind.ACCESS_REQUEST, tx, block, resource=tx.resource,
                    declared_stage=tx.current_stage, sender=tx.sender.fingerprint.hex()),
            _validity(tx, block, right, decision, allowed, outcome),
        ]
        if allowed:
            c.roles_involved.add(state.registry.role_of(tx.sender))  # type: ignore[arg-type]
        levels = json.dumps({"resource": tx.resource, "rights": sorted(r.value for r in decision.rights),
                             "allowed": allowed}, sort_keys=True).encode()
        to = state.store_key or tx.sender
        return Effects(records, [_receipt(state, to, tx.timestamp, levels, case)],
                       decision=decision, denied=not allowed)

    if not allowed:
        return Effects([_validity(tx, block, right, decision, False, outcome)],
                       decision=decision, denied=True)

    role = state.registry.role_of(tx.sender)
    assert role is not None
    c.roles_involved.add(role)
    effects = Effects(decision=decision)

    if tx.kind is TxKind.FILE_UPLOAD:
        token = state.tokens.mint_original(case, tx.file_id, tx.content, tx.timestamp)  # type: ignore[arg-type]
        c.token_list.append(token.id)
        effects.records = [
            _record(RecordKind.TOKEN_LIST, tx, block, token=token.id.hex(),
                    position=len(c.token_list) - 1, file_id=tx.file_id),
            _record(RecordKind.TYPE_OF_DATA_UPLOAD, tx, block, type="raw", token=token.id.hex()),
        ]
        effects.receipts = [_receipt(state, tx.sender, tx.timestamp, token.id, case)]
    elif tx.kind is TxKind.ANALYSIS:
        token = state.tokens.derive_token(case, tx.parents, tx.timestamp)
        c.token_list.append(token.id)
        effects.records = [
            _record(RecordKind.TOKEN_DEPENDENCY, tx, block, token=token.id.hex(),
                    parents=[p.hex() for p in token.parents]),
            _record(RecordKind.TYPE_OF_DATA_UPLOAD, tx, block, type="analyzed", token=token.id.hex()),
        ]
        effects.receipts = [_receipt(state, tx.sender, tx.timestamp, token.id, case)]
    elif tx.kind is TxKind.STAGE:
        assert target is not None
        previous = c.current_stage
        c.current_stage = target
        state.stages[case] = target
        effects.records = [_record(RecordKind.STAGE_CHANGE, tx, block, **{
            "from": previous.value, "to": target.value})]
    elif tx.kind is TxKind.PROVENANCE:
        effects.records = [_validity(tx, block, right, decision, True)]
        served = state.provenance_source(case) if state.provenance_source else []
        effects.response = served
        data = digest(b"".join(r.line + b"\n" for r in served))
        effects.receipts = [_receipt(state, tx.sender, tx.timestamp, data, case)]
    return effects
