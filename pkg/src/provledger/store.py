"""Off-chain provenance record store, indexed by case, and its verifier.

The store is untrusted: it keeps each record as the exact canonical line the
sealer committed to, and ``verify_case_records`` recomputes the case's
chained root from those lines. The trust anchor is the root recorded in the
chain headers, never the store's own mirror.
"""
from __future__ import annotations

import enum
import json
import logging
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence
from urllib.parse import quote

from .core import ZERO_DIGEST, chain_case_root, from_hex
from .errors import OutOfOrderBlock, UnknownCase
from .records import ProvenanceRecord, case_block_root

log = logging.getLogger(__name__)


class Verdict(enum.Enum):
    VERIFIED = "Verified"
    COMPROMISED = "Compromised"


@dataclass(frozen=True)
class VerificationReport:
    case: str
    recomputed_root: bytes
    stored_root: bytes
    verdict: Verdict
    first_divergent_block: int | None = None

    @property
    def verified(self) -> bool:
        return self.verdict is Verdict.VERIFIED

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "recomputed_root": self.recomputed_root.hex(),
            "stored_root": self.stored_root.hex(),
            "verdict": self.verdict.value,
            "first_divergent_block": self.first_divergent_block,
        }


# Canonical lines open with the block number and close with the tx id
# (sorted keys). Anything else is grouped as an opaque leaf; the line hash
# covers the full content either way.
_HEAD = re.compile(rb'\{"block":(0|[1-9][0-9]{0,18}),')
_TAIL = re.compile(rb',"tx":"([0-9a-f]{64})"\}\Z')


def _parse_head(line: bytes) -> tuple[int | None, bytes]:
    """(block number, tx id) of a stored line; (None, b'') when unreadable."""
    head = _HEAD.match(line)
    tail = _TAIL.search(line)
    if head is None or tail is None:
        return None, b""
    return int(head.group(1)), bytes.fromhex(tail.group(1).decode())


def fold_case_lines(lines: Sequence[bytes]) -> list[tuple[int | None, bytes]]:
    """Running case roots after each stored block group, in stored order.

    Lines are grouped exactly as stored: a new block group starts whenever the
    block number changes and a new transaction group whenever the tx id
    changes. Nothing is re-sorted, so disorder in the store surfaces as a
    root mismatch. Unreadable lines stay in the current group as opaque
    leaves.
    """
    blocks: list[tuple[int | None, list[tuple[bytes, list[bytes]]]]] = []
    for line in lines:
        block, tx = _parse_head(line)
        if block is None and blocks:
            block = blocks[-1][0]
        if not blocks or blocks[-1][0] != block:
            blocks.append((block, []))
        groups = blocks[-1][1]
        if tx and groups and groups[-1][0] == tx:
            groups[-1][1].append(line)
        else:
            groups.append((tx, [line]))
    out = []
    root = ZERO_DIGEST
    for block, groups in blocks:
        root = chain_case_root(root, case_block_root(groups))
        out.append((block, root))
    return out


def first_divergence(recomputed: Sequence[tuple[int | None, bytes]],
                     history: Sequence[tuple[int, bytes]]) -> int | None:
    """Block index of the first prefix where the store departs from the chain."""
    n = min(len(recomputed), len(history))
    lo, hi = 0, n
    # Chained roots agree on a prefix and disagree from the first divergence on.
    while lo < hi:
        mid = (lo + hi) // 2
        if tuple(recomputed[mid]) == tuple(history[mid]):
            lo = mid + 1
        else:
            hi = mid
    if lo < len(history):
        return history[lo][0]
    if lo < len(recomputed):
        return recomputed[lo][0]
    return None


class RecordStore:
    def __init__(self) -> None:
        self._lines: dict[str, list[bytes]] = {}
        self._last_block: dict[str, int] = {}
        self._roots: dict[str, bytes | None] = {}
        # Parsed form of _lines, dropped whenever lines are replaced.
        self._parsed: dict[str, list[ProvenanceRecord]] = {}
        self._lock = threading.Lock()

    def __contains__(self, case: str) -> bool:
        return case in self._lines

    @property
    def cases(self) -> list[str]:
        return list(self._lines)

    def append_block_records(self, case: str, block_number: int,
                             records: Sequence[ProvenanceRecord], m_case: bytes | None) -> None:
        with self._lock:
            last = self._last_block.get(case)
            if last is not None and block_number <= last:
                raise OutOfOrderBlock(f"{case}: block {block_number} after {last}")
            # One extend per block: readers copying the list see whole blocks only.
            self._lines.setdefault(case, []).extend([r.line for r in records])
            if case in self._parsed or last is None:
                self._parsed.setdefault(case, []).extend(records)
            self._last_block[case] = block_number
            self._roots[case] = m_case

    def raw_lines(self, case: str) -> list[bytes]:
        try:
            return list(self._lines[case])
        except KeyError:
            raise UnknownCase(case) from None

    def replace_lines(self, case: str, lines: Sequence[bytes]) -> None:
        """Overwrite a case's stored lines verbatim (storage-level access)."""
        with self._lock:
            self._lines[case] = list(lines)
            self._parsed.pop(case, None)

    def stored_root(self, case: str) -> bytes | None:
        return self._roots.get(case)

    def last_block(self, case: str) -> int | None:
        return self._last_block.get(case)

    def fetch_case_records(self, case: str) -> list[ProvenanceRecord]:
        parsed = self._parsed.get(case)
        if parsed is not None:
            return list(parsed)
        out = []
        for line in self.raw_lines(case):
            try:
                out.append(ProvenanceRecord.from_line(line))
            except (ValueError, KeyError, TypeError):
                log.warning("unreadable record line for case %s", case)
        self._parsed[case] = out
        return list(out)

    def verify_case_records(self, case: str, chain_root: bytes,
                            root_history: Sequence[tuple[int, bytes]] | None = None
                            ) -> VerificationReport:
        prefixes = fold_case_lines(self.raw_lines(case))
        recomputed = prefixes[-1][1] if prefixes else ZERO_DIGEST
        if recomputed == chain_root:
            return VerificationReport(case, recomputed, chain_root, Verdict.VERIFIED)
        divergent = first_divergence(prefixes, root_history) if root_history else None
        return VerificationReport(case, recomputed, chain_root, Verdict.COMPROMISED, divergent)

    # --- persistence ----------------------------------------------------

    @staticmethod
    def case_filename(case: str) -> str:
        return quote(case, safe="") + ".jsonl"

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        index = {}
        for case in sorted(self._lines):
            name = self.case_filename(case)
            (d / name).write_bytes(b"".join(l + b"\n" for l in self._lines[case]))
            root = self._roots.get(case)
            index[case] = {"file": name, "last_block": self._last_block.get(case),
                           "stored_root": root.hex() if root is not None else None}
        (d / "index.json").write_text(json.dumps(index, sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "RecordStore":
        d = Path(directory)
        store = cls()
        index_path = d / "index.json"
        if not index_path.exists():
            return store
        index = json.loads(index_path.read_text())
        for case, meta in index.items():
            data = (d / meta["file"]).read_bytes()
            lines = data.split(b"\n")
            if lines and lines[-1] == b"":
                lines.pop()
            store._lines[case] = lines
            store._last_block[case] = meta["last_block"]
            root = meta.get("stored_root")
            store._roots[case] = from_hex(root) if root else None
        return store
