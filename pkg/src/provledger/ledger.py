"""Single-authority chain: mempool, block sealing, case-root chaining.

One sealer orders transactions FIFO and cuts blocks of at most
``transactions_per_block``. For every case touched by a block the header
records

    M_case = H(0x04 | M_prev_case | T_case)

where ``T_case`` is the Merkle root over that case's transaction commitments
in body order and ``M_prev_case`` is the zero digest for a case's first block.
"""
from __future__ import annotations

import collections
import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .contracts import ContractState, Effects, apply_transaction
from .core import (TAG_CASE_LINK, TAG_LEAF, ZERO_DIGEST, BlockHeader, Transaction, body_root,
                   chain_case_root, merkle_root)
from .errors import EmptyMempool, LedgerError, MalformedTransaction, UnknownCase
from .records import ProvenanceRecord, records_leaf_data
from .store import RecordStore

log = logging.getLogger(__name__)
_sha256 = hashlib.sha256


@dataclass(frozen=True)
class SealingConfig:
    transactions_per_block: int = 10
    with_case_roots: bool = True

    def __post_init__(self) -> None:
        if self.transactions_per_block < 1:
            raise ValueError("transactions_per_block must be >= 1")


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...]
    records: tuple[ProvenanceRecord, ...] = ()

    @property
    def index(self) -> int:
        return self.header.index

    def to_dict(self) -> dict[str, Any]:
        return {
            "header": self.header.to_dict(),
            "transactions": [t.to_dict() for t in self.transactions],
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Block":
        return cls(BlockHeader.from_dict(d["header"]),
                   tuple(Transaction.from_dict(t) for t in d["transactions"]),
                   tuple(ProvenanceRecord.from_dict(r) for r in d["records"]))


@dataclass(frozen=True)
class Ticket:
    tx_id: bytes
    position: int


def records_by_case(records: Iterable[ProvenanceRecord]) -> dict[str, list[ProvenanceRecord]]:
    out: dict[str, list[ProvenanceRecord]] = {}
    for r in records:
        if r.case is not None:
            out.setdefault(r.case, []).append(r)
    return out


class ChainMismatch(LedgerError):
    """Replayed state disagrees with what the stored blocks claim."""


class Ledger:
    def __init__(self, contracts: ContractState | None = None, store: RecordStore | None = None,
                 config: SealingConfig | None = None, clock: Callable[[], int] | None = None,
                 serve_provenance: bool = True):
        self.contracts = contracts or ContractState()
        self.store = store
        self.config = config or SealingConfig()
        self.clock = clock or (lambda: time.time_ns() // 1_000_000)
        self.blocks: list[Block] = []
        self.mempool: collections.deque[Transaction] = collections.deque()
        self.root_history: dict[str, list[tuple[int, bytes]]] = {}
        self.last_effects: list[tuple[Transaction, Effects]] = []
        self.rejected: list[tuple[Transaction, LedgerError]] = []
        self._submitted = 0
        self._lock = threading.Lock()
        if serve_provenance and self.contracts.provenance_source is None and store is not None:
            self.contracts.provenance_source = self._serve_provenance

    def _serve_provenance(self, case: str) -> list[ProvenanceRecord]:
        assert self.store is not None
        return self.store.fetch_case_records(case) if case in self.store else []

    def __len__(self) -> int:
        return len(self.blocks)

    # --- mempool ----------------------------------------------------------

    def submit_transaction(self, tx: Transaction) -> Ticket:
        missing = tx.missing_fields()
        if missing:
            raise MalformedTransaction(f"{tx.kind.value}: missing {', '.join(missing)}")
        self.mempool.append(tx)
        self._submitted += 1
        return Ticket(tx.id, self._submitted - 1)

    # --- sealing ----------------------------------------------------------

    def seal_block(self, limit: int | None = None) -> Block:
        """Cut one block from the head of the mempool.

        ``limit`` overrides the configured block size, for a genesis block
        that must hold a fixed bootstrap batch.
        """
        with self._lock:
            if not self.mempool:
                raise EmptyMempool("nothing to seal")
            n = limit if limit is not None else self.config.transactions_per_block
            batch = [self.mempool.popleft() for _ in range(min(n, len(self.mempool)))]
            return self._seal(batch, None)

    def seal_all(self) -> list[Block]:
        out = []
        while self.mempool:
            out.append(self.seal_block())
        return out

    def _seal(self, batch: Sequence[Transaction], replay: Block | None) -> Block:
        index = len(self.blocks)
        prev = self.blocks[-1].header if self.blocks else None
        if replay is not None:
            timestamp = replay.header.timestamp
        else:
            timestamp = max(self.clock(), prev.timestamp if prev else 0)

        included: list[Transaction] = []
        records: list[ProvenanceRecord] = []
        effects_log: list[tuple[Transaction, Effects]] = []
        for tx in batch:
            try:
                effects = apply_transaction(self.contracts, tx, index)
            except LedgerError as exc:
                if replay is not None:
                    raise ChainMismatch(f"block {index}: sealed transaction fails: {exc}") from exc
                log.warning("dropping transaction %s: %s", tx.id.hex()[:16], exc)
                self.rejected.append((tx, exc))
                continue
            included.append(tx)
            records.extend(effects.records)
            effects_log.append((tx, effects))

        per_case = records_by_case(records)
        case_roots: dict[str, bytes] = {}
        if self.config.with_case_roots:
            history = self.root_history
            for case, recs in per_case.items():
                hist = history.get(case)
                leaves = records_leaf_data(recs)
                # Single-transaction cases dominate; skip the generic tree walk.
                t_case = _sha256(TAG_LEAF + leaves[0]).digest() if len(leaves) == 1 \
                    else merkle_root(leaves)
                case_roots[case] = _sha256(
                    TAG_CASE_LINK + (hist[-1][1] if hist else ZERO_DIGEST) + t_case).digest()

        header = BlockHeader(index, prev.hash if prev else ZERO_DIGEST, timestamp,
                             body_root(included), case_roots)
        block = Block(header, tuple(included), tuple(records))
        if replay is not None and block.to_dict() != replay.to_dict():
            raise ChainMismatch(f"block {index}: replay does not reproduce stored block")

        self.blocks.append(block)
        for case, root in case_roots.items():
            self.root_history.setdefault(case, []).append((index, root))
        if self.store is not None:
            for case, recs in per_case.items():
                self.store.append_block_records(case, index, recs, case_roots.get(case))
        self.last_effects = effects_log
        return block

    # --- queries ----------------------------------------------------------

    def latest_case_root(self, case: str) -> tuple[bytes, int]:
        hist = self.root_history.get(case)
        if not hist:
            raise UnknownCase(case)
        index, root = hist[-1]
        return root, index

    def case_root_history(self, case: str) -> list[tuple[int, bytes]]:
        return list(self.root_history.get(case, ()))

    # --- persistence and replay ------------------------------------------

    def save_block(self, block: Block, directory: str | Path) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{block.index}.json"
        path.write_text(json.dumps(block.to_dict(), indent=1) + "\n")
        return path

    def save_blocks(self, directory: str | Path, start: int = 0) -> None:
        for block in self.blocks[start:]:
            self.save_block(block, directory)

    @staticmethod
    def load_blocks(directory: str | Path) -> list[Block]:
        d = Path(directory)
        if not d.exists():
            return []
        paths = sorted(d.glob("*.json"), key=lambda p: int(p.stem))
        return [Block.from_dict(json.loads(p.read_text())) for p in paths]

    def replay(self, blocks: Iterable[Block]) -> None:
        """Re-execute stored blocks from genesis, checking every header."""
        if self.blocks:
            raise ValueError("replay needs an empty ledger")
        for block in blocks:
            if block.index != len(self.blocks):
                raise ChainMismatch(f"expected block {len(self.blocks)}, found {block.index}")
            self._seal(block.transactions, block)


def validate_chain(blocks: Sequence[Block]) -> int | None:
    """Index of the first block failing revalidation, or None if all pass.

    Checks the prev-hash link, the body root and every case root, each
    recomputed from the block contents alone.
    """
    history: dict[str, bytes] = {}
    prev_hash = ZERO_DIGEST
    for i, block in enumerate(blocks):
        h = block.header
        if h.index != i or h.prev_hash != prev_hash:
            return i
        if body_root(block.transactions) != h.body_root:
            return i
        tx_ids = {t.id for t in block.transactions}
        if any(r.tx_id not in tx_ids for r in block.records):
            return i
        if h.case_roots:
            per_case = records_by_case(block.records)
            if set(per_case) != set(h.case_roots):
                return i
            for case, recs in per_case.items():
                root = chain_case_root(history.get(case, ZERO_DIGEST),
                                       merkle_root(records_leaf_data(recs)))
                if root != h.case_roots[case]:
                    return i
                history[case] = root
        prev_hash = h.hash
    return None
