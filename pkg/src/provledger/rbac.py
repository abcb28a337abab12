"""Role-based access control with staged authorization.

A user's rights are looked up jointly by the case's current stage and the
user's role. ``retrieve_access_info`` is the decision procedure: it first
checks the stage declared in the transaction against the case's actual stage,
then the sender's registration, then the policy cell.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

from .core import PublicKey, Transaction
from .errors import AlreadyRegistered, InvalidPolicy


class Role(enum.Enum):
    DIGITAL_FORENSICS_EXAMINER = "DigitalForensicsExaminer"
    INVESTIGATOR = "Investigator"
    LEGAL_COUNSEL = "LegalCounsel"
    LAW_ENFORCEMENT = "LawEnforcement"


class Stage(enum.Enum):
    AFFIDAVIT_WARRANT = "AffidavitWarrant"
    INVESTIGATION = "Investigation"
    ANALYSIS = "Analysis"
    PRESENTED_IN_COURT = "PresentedInCourt"
    JUDGEMENT_DAY = "JudgementDay"
    CASE_CLOSED = "CaseClosed"
    POTENTIAL_APPEAL = "PotentialAppeal"

    @property
    def ordinal(self) -> int:
        return _STAGE_ORDER[self]

    @classmethod
    def parse(cls, name: str | None) -> "Stage | None":
        """Stage for ``name``, or None when it is not a known stage."""
        try:
            return cls(name)
        except ValueError:
            return None


_STAGE_ORDER = {s: i for i, s in enumerate(Stage)}


class Right(enum.Enum):
    READ_EVIDENCE = "ReadEvidence"
    UPLOAD_FILE = "UploadFile"
    UPLOAD_ANALYSIS = "UploadAnalysis"
    REQUEST_ACCESS = "RequestAccess"
    CHANGE_STAGE = "ChangeStage"
    EXTRACT_PROVENANCE = "ExtractProvenance"


class Outcome(enum.Enum):
    GRANTED = "granted"
    INVALID_STAGE = "invalid_stage"
    ACCESS_DENIED = "access_denied"
    NO_ACCESS_RIGHTS = "no_access_rights"


@dataclass(frozen=True)
class AccessDecision:
    outcome: Outcome
    rights: frozenset[Right] = frozenset()

    @property
    def granted(self) -> bool:
        return self.outcome is Outcome.GRANTED

    def allows(self, right: Right) -> bool:
        return self.granted and right in self.rights


class PolicyMatrix:
    """Total map (stage, role) -> rights; absent cells are empty."""

    def __init__(self, cells: Mapping[tuple[Stage, Role], Iterable[Right]] | None = None,
                 *, forward_adjacent_only: bool = False):
        self._cells: dict[tuple[Stage, Role], frozenset[Right]] = {
            (s, r): frozenset() for s in Stage for r in Role
        }
        for key, rights in (cells or {}).items():
            self._cells[key] = frozenset(rights)
        self.forward_adjacent_only = forward_adjacent_only

    def rights(self, stage: Stage, role: Role) -> frozenset[Right]:
        return self._cells[(stage, role)]

    def with_cell(self, stage: Stage, role: Role, rights: Iterable[Right]) -> "PolicyMatrix":
        cells = dict(self._cells)
        cells[(stage, role)] = frozenset(rights)
        return PolicyMatrix(cells, forward_adjacent_only=self.forward_adjacent_only)

    def allows_transition(self, current: Stage, target: Stage) -> bool:
        if not self.forward_adjacent_only:
            return True
        return target.ordinal == current.ordinal + 1

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PolicyMatrix":
        cells = {}
        options = data.get("options", {})
        for stage_name, by_role in data.items():
            if stage_name.startswith("_") or stage_name == "options":
                continue
            stage = Stage.parse(stage_name)
            if stage is None:
                raise InvalidPolicy(f"unknown stage {stage_name!r}")
            for role_name, rights in by_role.items():
                try:
                    cells[(stage, Role(role_name))] = [Right(r) for r in rights]
                except ValueError as exc:
                    raise InvalidPolicy(str(exc)) from None
        return cls(cells, forward_adjacent_only=bool(options.get("forward_adjacent_only", False)))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"options": {"forward_adjacent_only": self.forward_adjacent_only}}
        for s in Stage:
            out[s.value] = {r.value: sorted(x.value for x in self._cells[(s, r)]) for r in Role}
        return out

    @classmethod
    def load(cls, path: str | Path) -> "PolicyMatrix":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    @classmethod
    def default(cls) -> "PolicyMatrix":
        text = resources.files("provledger.data").joinpath("default_policy.json").read_text()
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Registration:
    fingerprint: bytes
    role: Role


class UserRegistry:
    def __init__(self) -> None:
        self._roles: dict[bytes, Role] = {}

    def __len__(self) -> int:
        return len(self._roles)

    def __contains__(self, key: PublicKey) -> bool:
        return key.fingerprint in self._roles

    def register(self, key: PublicKey, role: Role) -> Registration:
        if key.fingerprint in self._roles:
            raise AlreadyRegistered(key.fingerprint.hex())
        self._roles[key.fingerprint] = role
        return Registration(key.fingerprint, role)

    def role_of(self, key: PublicKey) -> Role | None:
        return self._roles.get(key.fingerprint)

    def to_list(self) -> list[dict[str, str]]:
        return [{"fingerprint": fp.hex(), "role": role.value}
                for fp, role in sorted(self._roles.items())]


def retrieve_access_info(tx: Transaction, registry: UserRegistry, policy: PolicyMatrix,
                         actual_stage: Stage) -> AccessDecision:
    declared = Stage.parse(tx.current_stage)
    if declared is None or declared is not actual_stage:
        return AccessDecision(Outcome.INVALID_STAGE)
    role = registry.role_of(tx.sender)
    if role is None:
        return AccessDecision(Outcome.ACCESS_DENIED)
    rights = policy.rights(actual_stage, role)
    if not rights:
        return AccessDecision(Outcome.NO_ACCESS_RIGHTS)
    return AccessDecision(Outcome.GRANTED, rights)
