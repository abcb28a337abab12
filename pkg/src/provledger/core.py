"""Canonical value types, serialization and hashing primitives.

Every digest in the package is SHA-256. Inputs are prefixed with a one-byte
domain tag so that a leaf can never be confused with an internal node, a
transaction, a token or a case-root link:

    0x00 merkle leaf      0x01 merkle node      0x02 transaction
    0x03 token            0x04 case-root link

Transaction wire layout (all integers big-endian; ``lp(x)`` is a u32 length
followed by the bytes; ``opt(x)`` is 0x00 when absent, else 0x01 + lp(x)):

    u8 version=1 | u8 kind | opt(case) | lp(sender) | u64 timestamp
    | opt(file_id) | opt(content) | u32 n + n * lp(parent)
    | opt(stage) | opt(current_stage) | opt(resource) | opt(subject) | opt(role)

Strings are UTF-8.
"""
from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Sequence

from .errors import EmptyLeaves, MissingField

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)

TAG_LEAF = b"\x00"
TAG_NODE = b"\x01"
TAG_TX = b"\x02"
TAG_TOKEN = b"\x03"
TAG_CASE_LINK = b"\x04"

SERIALIZATION_VERSION = 1

_sha256 = hashlib.sha256
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def tagged_digest(tag: bytes, *parts: bytes) -> bytes:
    return _sha256(tag + b"".join(parts)).digest()


def to_hex(d: bytes) -> str:
    return d.hex()


def from_hex(s: str, *, size: int | None = DIGEST_SIZE) -> bytes:
    raw = bytes.fromhex(s)
    if size is not None and len(raw) != size:
        raise ValueError(f"expected {size} bytes, got {len(raw)}")
    return raw


def u32(n: int) -> bytes:
    return _U32.pack(n)


def u64(n: int) -> bytes:
    return _U64.pack(n)


def lp(data: bytes) -> bytes:
    return _U32.pack(len(data)) + data


def opt(data: bytes | None) -> bytes:
    if data is None:
        return b"\x00"
    return b"\x01" + _U32.pack(len(data)) + data


def _opt_str(s: str | None) -> bytes:
    return opt(None if s is None else s.encode("utf-8"))


# --- Merkle -----------------------------------------------------------------

def leaf_hash(d: bytes) -> bytes:
    return _sha256(TAG_LEAF + d).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return _sha256(TAG_NODE + left + right).digest()


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    """Root of a binary Merkle tree; an odd level duplicates its last node."""
    if not leaves:
        raise EmptyLeaves("merkle_root needs at least one leaf")
    if len(leaves) == 1:
        return _sha256(TAG_LEAF + leaves[0]).digest()
    level = [_sha256(TAG_LEAF + d).digest() for d in leaves]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [_sha256(TAG_NODE + level[i] + level[i + 1]).digest()
                 for i in range(0, len(level), 2)]
    return level[0]


def chain_case_root(prev: bytes, block_root: bytes) -> bytes:
    """Fold one block's case-restricted root into the running case root."""
    return _sha256(TAG_CASE_LINK + prev + block_root).digest()


# --- Keys -------------------------------------------------------------------

@dataclass(frozen=True)
class PublicKey:
    data: bytes

    @cached_property
    def fingerprint(self) -> bytes:
        return digest(self.data)

    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, s: str) -> "PublicKey":
        return cls(bytes.fromhex(s))


# --- Transactions -----------------------------------------------------------

class TxKind(enum.Enum):
    SETUP = "Setup"
    INITIAL_UPLOAD = "InitialUpload"
    FILE_UPLOAD = "FileUpload"
    ANALYSIS = "Analysis"
    ACC_REQ = "AccReq"
    STAGE = "Stage"
    PROVENANCE = "Provenance"

    @property
    def code(self) -> int:
        return _KIND_CODES[self]


_KIND_CODES = {k: i for i, k in enumerate(TxKind)}

# Payload fields each kind must carry (case is handled separately).
REQUIRED_FIELDS: dict[TxKind, tuple[str, ...]] = {
    TxKind.SETUP: ("subject", "role"),
    TxKind.INITIAL_UPLOAD: ("case", "content", "stage"),
    TxKind.FILE_UPLOAD: ("case", "file_id", "content", "current_stage"),
    TxKind.ANALYSIS: ("case", "parents", "current_stage"),
    TxKind.ACC_REQ: ("case", "resource", "current_stage"),
    TxKind.STAGE: ("case", "stage", "current_stage"),
    TxKind.PROVENANCE: ("case", "current_stage"),
}


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    sender: PublicKey
    timestamp: int
    case: str | None = None
    file_id: str | None = None
    content: bytes | None = None
    parents: tuple[bytes, ...] = ()
    stage: str | None = None
    current_stage: str | None = None
    resource: str | None = None
    subject: PublicKey | None = None
    role: str | None = None

    def missing_fields(self) -> list[str]:
        missing = []
        for name in REQUIRED_FIELDS[self.kind]:
            value = getattr(self, name)
            if value is None or value == () or value == "":
                missing.append(name)
        if self.kind is TxKind.SETUP and self.case is not None:
            missing.append("case(absent)")
        return missing

    @cached_property
    def id(self) -> bytes:
        return tagged_digest(TAG_TX, canonical_serialize(self))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "id": self.id.hex(),
            "kind": self.kind.value,
            "sender": self.sender.hex(),
            "timestamp": self.timestamp,
        }
        if self.case is not None:
            d["case"] = self.case
        if self.file_id is not None:
            d["file_id"] = self.file_id
        if self.content is not None:
            d["content"] = self.content.hex()
        if self.parents:
            d["parents"] = [p.hex() for p in self.parents]
        for name in ("stage", "current_stage", "resource", "role"):
            value = getattr(self, name)
            if value is not None:
                d[name] = value
        if self.subject is not None:
            d["subject"] = self.subject.hex()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Transaction":
        return cls(
            kind=TxKind(d["kind"]),
            sender=PublicKey.from_hex(d["sender"]),
            timestamp=int(d["timestamp"]),
            case=d.get("case"),
            file_id=d.get("file_id"),
            content=bytes.fromhex(d["content"]) if "content" in d else None,
            parents=tuple(bytes.fromhex(p) for p in d.get("parents", ())),
            stage=d.get("stage"),
            current_stage=d.get("current_stage"),
            resource=d.get("resource"),
            subject=PublicKey.from_hex(d["subject"]) if "subject" in d else None,
            role=d.get("role"),
        )


def canonical_serialize(tx: Transaction) -> bytes:
    missing = tx.missing_fields()
    if missing:
        raise MissingField(f"{tx.kind.value} transaction missing {', '.join(missing)}")
    parts = [
        bytes((SERIALIZATION_VERSION, tx.kind.code)),
        _opt_str(tx.case),
        lp(tx.sender.data),
        u64(tx.timestamp),
        _opt_str(tx.file_id),
        opt(tx.content),
        u32(len(tx.parents)),
    ]
    parts.extend(lp(p) for p in tx.parents)
    parts += [
        _opt_str(tx.stage),
        _opt_str(tx.current_stage),
        _opt_str(tx.resource),
        opt(None if tx.subject is None else tx.subject.data),
        _opt_str(tx.role),
    ]
    return b"".join(parts)


def transaction_ids(txs: Iterable[Transaction]) -> list[bytes]:
    return [t.id for t in txs]


@dataclass(frozen=True)
class BlockHeader:
    index: int
    prev_hash: bytes
    timestamp: int
    body_root: bytes
    case_roots: dict[str, bytes] = field(default_factory=dict)

    def serialize(self) -> bytes:
        roots = self.case_roots
        parts = [_U64.pack(self.index), self.prev_hash, _U64.pack(self.timestamp),
                 self.body_root, _U32.pack(len(roots))]
        for case in sorted(roots):
            name = case.encode("utf-8")
            parts += (_U32.pack(len(name)), name, roots[case])
        return b"".join(parts)

    @cached_property
    def hash(self) -> bytes:
        return digest(self.serialize())

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "prev_hash": self.prev_hash.hex(),
            "timestamp": self.timestamp,
            "body_root": self.body_root.hex(),
            "case_roots": {c: self.case_roots[c].hex() for c in sorted(self.case_roots)},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BlockHeader":
        return cls(
            index=int(d["index"]),
            prev_hash=from_hex(d["prev_hash"]),
            timestamp=int(d["timestamp"]),
            body_root=from_hex(d["body_root"]),
            case_roots={c: from_hex(h) for c, h in d["case_roots"].items()},
        )


def body_root(txs: Sequence[Transaction]) -> bytes:
    """Merkle root over transaction ids; an empty body commits to the zero digest."""
    if not txs:
        return ZERO_DIGEST
    return merkle_root([t.id for t in txs])
