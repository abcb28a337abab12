"""File-version tokens and the per-case dependency DAG.

Token ids (``T`` = 0x03 token domain tag, integers big-endian):

    original: sha256(T | 0x00 | lp(case) | lp(file_id) | content(32) | lp(u64 time))
    derived:  sha256(T | 0x01 | K_1 | ... | K_n | lp(u64 time))

Parent order is significant: the same parents listed in another order give a
different derived token.
"""
from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass
from typing import Any, Sequence

from .core import TAG_TOKEN, lp, tagged_digest, u64
from .errors import DuplicateToken, EmptyParents, UnknownCase, UnknownParent, UnknownToken


class TokenKind(enum.Enum):
    ORIGINAL = "original"
    DERIVED = "derived"


def original_token_id(case: str, file_id: str, content: bytes, time: int) -> bytes:
    return tagged_digest(TAG_TOKEN, b"\x00", lp(case.encode()), lp(file_id.encode()),
                         content, lp(u64(time)))


def derived_token_id(parents: Sequence[bytes], time: int) -> bytes:
    if not parents:
        raise EmptyParents("a derived token needs at least one parent")
    return tagged_digest(TAG_TOKEN, b"\x01", *parents, lp(u64(time)))


@dataclass(frozen=True)
class Token:
    id: bytes
    case: str
    kind: TokenKind
    parents: tuple[bytes, ...]
    created_at: int
    source: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id.hex(),
            "kind": self.kind.value,
            "parents": [p.hex() for p in self.parents],
            "created_at": self.created_at,
            "source": self.source,
        }


class DependencyGraph:
    """Hash-linked DAG of one case's tokens, in insertion order."""

    def __init__(self, case: str):
        self.case = case
        self.nodes: dict[bytes, Token] = {}

    def __contains__(self, token_id: bytes) -> bool:
        return token_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, token: Token) -> None:
        if token.id in self.nodes:
            raise DuplicateToken(token.id.hex())
        for p in token.parents:
            if p not in self.nodes:
                raise UnknownParent(p.hex())
        self.nodes[token.id] = token

    def ancestry(self, token_id: bytes) -> tuple[bytes, ...]:
        """Transitive parents, roots first; ties broken by id bytes."""
        if token_id not in self.nodes:
            raise UnknownToken(token_id.hex())
        seen: set[bytes] = set()
        stack = list(self.nodes[token_id].parents)
        while stack:
            t = stack.pop()
            if t not in seen:
                seen.add(t)
                stack.extend(self.nodes[t].parents)
        # Kahn's algorithm restricted to the ancestor set.
        pending = {t: sum(1 for p in set(self.nodes[t].parents) if p in seen) for t in seen}
        children: dict[bytes, list[bytes]] = {t: [] for t in seen}
        for t in seen:
            for p in set(self.nodes[t].parents):
                children[p].append(t)
        ready = [t for t, n in pending.items() if n == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            t = heapq.heappop(ready)
            order.append(t)
            for c in children[t]:
                pending[c] -= 1
                if pending[c] == 0:
                    heapq.heappush(ready, c)
        return tuple(order)

    def to_dict(self) -> dict[str, Any]:
        return {"case": self.case, "nodes": [t.to_dict() for t in self.nodes.values()]}


class TokenRegistry:
    """All dependency graphs, keyed by case. Single writer."""

    def __init__(self) -> None:
        self.graphs: dict[str, DependencyGraph] = {}

    def open_case(self, case: str) -> None:
        self.graphs.setdefault(case, DependencyGraph(case))

    def graph(self, case: str) -> DependencyGraph:
        try:
            return self.graphs[case]
        except KeyError:
            raise UnknownCase(case) from None

    def check_original(self, case: str, file_id: str, content: bytes, time: int) -> bytes:
        tid = original_token_id(case, file_id, content, time)
        if tid in self.graph(case):
            raise DuplicateToken(tid.hex())
        return tid

    def mint_original(self, case: str, file_id: str, content: bytes, time: int) -> Token:
        tid = self.check_original(case, file_id, content, time)
        token = Token(tid, case, TokenKind.ORIGINAL, (), time, file_id)
        self.graphs[case].add(token)
        return token

    def check_derived(self, case: str, parents: Sequence[bytes], time: int) -> bytes:
        graph = self.graph(case)
        tid = derived_token_id(parents, time)
        for p in parents:
            if p not in graph:
                raise UnknownParent(p.hex())
        if tid in graph:
            raise DuplicateToken(tid.hex())
        return tid

    def derive_token(self, case: str, parents: Sequence[bytes], time: int) -> Token:
        tid = self.check_derived(case, parents, time)
        token = Token(tid, case, TokenKind.DERIVED, tuple(parents), time)
        self.graphs[case].add(token)
        return token

    def ancestry_of(self, case: str, token_id: bytes) -> tuple[bytes, ...]:
        return self.graph(case).ancestry(token_id)
