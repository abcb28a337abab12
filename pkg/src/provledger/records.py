"""Provenance records and the per-block case commitment over them.

A record is persisted as one canonical JSON line (sorted keys, no
whitespace). The same bytes are hashed on the sealing side and on the
verification side, so any change to a stored line changes the commitment.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Sequence

import struct

from .core import merkle_root

_U32 = struct.Struct(">I")


class RecordKind(enum.Enum):
    CASE_NUMBER = "CaseNumber"
    TIMESTAMP = "Timestamp"
    INITIAL_BLOCK_NUMBER = "InitialBlockNumber"
    CURRENT_STAGE = "CurrentStage"
    TOKEN_LIST = "TokenList"
    ACCESS_REQUEST = "AccessRequest"
    CLIENT_INFO = "ClientInfo"
    TOKEN_DEPENDENCY = "TokenDependency"
    ACCESS_VALIDITY = "AccessValidity"
    STAGE_CHANGE = "StageChange"
    TYPE_OF_DATA_UPLOAD = "TypeOfDataUpload"


@dataclass(frozen=True)
class ProvenanceRecord:
    kind: RecordKind
    case: str | None
    block_number: int
    tx_id: bytes
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "block": self.block_number,
            "case": self.case,
            "kind": self.kind.value,
            "payload": self.payload,
            "tx": self.tx_id.hex(),
        }

    @cached_property
    def line(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=True).encode("ascii")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProvenanceRecord":
        return cls(RecordKind(d["kind"]), d["case"], int(d["block"]),
                   bytes.fromhex(d["tx"]), d["payload"])

    @classmethod
    def from_line(cls, line: bytes) -> "ProvenanceRecord":
        return cls.from_dict(json.loads(line))


def tx_leaf_data(tx_id: bytes, lines: Iterable[bytes]) -> bytes:
    """Leaf input binding one transaction id to the record lines it produced:
    ``tx_id | lp(line_1) | ... | lp(line_k)``."""
    return tx_id + b"".join([_U32.pack(len(l)) + l for l in lines])


def group_lines(records: Sequence[ProvenanceRecord]) -> list[tuple[bytes, list[bytes]]]:
    """Consecutive runs of records sharing a tx id, in emission order."""
    groups: list[tuple[bytes, list[bytes]]] = []
    for r in records:
        if groups and groups[-1][0] == r.tx_id:
            groups[-1][1].append(r.line)
        else:
            groups.append((r.tx_id, [r.line]))
    return groups


def records_leaf_data(records: Sequence[ProvenanceRecord]) -> list[bytes]:
    """``tx_leaf_data`` for each consecutive tx-id run, built in one pass."""
    out: list[bytes] = []
    cur: bytes | None = None
    parts: list[bytes] = []
    pack = _U32.pack
    for r in records:
        if r.tx_id != cur:
            if cur is not None:
                out.append(b"".join(parts))
            cur = r.tx_id
            parts = [cur]
        line = r.line
        parts.append(pack(len(line)))
        parts.append(line)
    if cur is not None:
        out.append(b"".join(parts))
    return out


def case_block_root(groups: Sequence[tuple[bytes, Sequence[bytes]]]) -> bytes:
    """Merkle root over one case's transactions within one block."""
    return merkle_root([tx_leaf_data(tx, lines) for tx, lines in groups])
