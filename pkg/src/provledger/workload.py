"""Seeded synthetic workloads: cases opened at random points in a stream of
randomly typed transactions.

The generator tracks each case's stage and tokens as it goes and picks
senders whose role holds the needed right at the case's current stage, so
the stream is mostly authorized and every Analysis references tokens that
will exist once the stream is sealed in order.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping

from .contracts import REQUIRED_RIGHT, ContractState
from .core import PublicKey, Transaction, TxKind, digest
from .errors import InfeasibleSpec
from .ledger import Ledger, SealingConfig
from .rbac import PolicyMatrix, Right, Role, Stage
from .sealing import Sealer
from .store import RecordStore
from .tokens import derived_token_id, original_token_id

DEFAULT_TX_MIX: dict[TxKind, float] = {
    TxKind.FILE_UPLOAD: 0.4,
    TxKind.ANALYSIS: 0.2,
    TxKind.ACC_REQ: 0.2,
    TxKind.STAGE: 0.1,
    TxKind.PROVENANCE: 0.1,
}
BASE_TIME_MS = 1_700_000_000_000
USERS_PER_ROLE = 2


@dataclass(frozen=True)
class WorkloadSpec:
    num_cases: int
    num_blocks: int
    tx_per_block: int = 10
    seed: int = 0
    tx_mix: Mapping[TxKind, float] = field(default_factory=lambda: dict(DEFAULT_TX_MIX))

    @property
    def total_transactions(self) -> int:
        return self.num_blocks * self.tx_per_block

    def check(self) -> None:
        if self.num_cases < 1:
            raise InfeasibleSpec("num_cases must be >= 1")
        if self.num_blocks < 1 or self.tx_per_block < 1:
            raise InfeasibleSpec("num_blocks and tx_per_block must be >= 1")
        if self.total_transactions < self.num_cases:
            raise InfeasibleSpec(
                f"{self.total_transactions} transactions cannot open {self.num_cases} cases")
        bad = [k for k in self.tx_mix if k in (TxKind.SETUP, TxKind.INITIAL_UPLOAD)]
        if bad or not self.tx_mix or any(w < 0 for w in self.tx_mix.values()) \
                or sum(self.tx_mix.values()) <= 0:
            raise InfeasibleSpec("tx_mix must weight only post-creation kinds, positively")


@dataclass
class Workload:
    spec: WorkloadSpec
    admin: PublicKey
    users: list[tuple[PublicKey, Role]]
    setup: list[Transaction]
    transactions: list[Transaction]
    cases: list[str]


def _key(seed: int, label: str) -> PublicKey:
    return PublicKey(digest(f"workload-key:{seed}:{label}".encode()))


def generate_workload(spec: WorkloadSpec, policy: PolicyMatrix | None = None) -> Workload:
    spec.check()
    policy = policy or PolicyMatrix.default()
    rng = random.Random(spec.seed)
    admin = _key(spec.seed, "admin")
    users = [(_key(spec.seed, f"{role.value}-{i}"), role)
             for role in Role for i in range(USERS_PER_ROLE)]
    setup = [Transaction(TxKind.SETUP, admin, BASE_TIME_MS, subject=k, role=r.value)
             for k, r in users]

    total = spec.total_transactions
    opens = {0, *rng.sample(range(1, total), spec.num_cases - 1)}
    kinds = list(spec.tx_mix)
    weights = [spec.tx_mix[k] for k in kinds]
    stages = list(Stage)

    case_names: list[str] = []
    stage_of: dict[str, Stage] = {}
    tokens_of: dict[str, list[bytes]] = {}
    files_of: dict[str, int] = {}

    def sender_for(right: Right, stage: Stage) -> PublicKey:
        holders = [k for k, r in users if right in policy.rights(stage, r)]
        return rng.choice(holders) if holders else rng.choice(users)[0]

    def allowed(sender: PublicKey, right: Right, stage: Stage) -> bool:
        role = next(r for k, r in users if k == sender)
        return right in policy.rights(stage, role)

    out: list[Transaction] = []
    for i in range(total):
        ts = BASE_TIME_MS + 1 + i
        if i in opens:
            case = f"CASE-{len(case_names) + 1:05d}"
            case_names.append(case)
            stage = rng.choice(stages)
            stage_of[case], tokens_of[case], files_of[case] = stage, [], 0
            out.append(Transaction(TxKind.INITIAL_UPLOAD, rng.choice(users)[0], ts, case=case,
                                   content=digest(f"{spec.seed}:{case}:initial".encode()),
                                   stage=stage.value))
            continue

        case = rng.choice(case_names)
        stage = stage_of[case]
        kind = rng.choices(kinds, weights)[0]
        if kind is TxKind.ANALYSIS and not tokens_of[case]:
            others = [(k, w) for k, w in zip(kinds, weights) if k is not TxKind.ANALYSIS and w > 0]
            kind = rng.choices([k for k, _ in others], [w for _, w in others])[0] \
                if others else TxKind.FILE_UPLOAD
        right = REQUIRED_RIGHT[kind]
        sender = sender_for(right, stage)
        ok = allowed(sender, right, stage)

        if kind is TxKind.FILE_UPLOAD:
            files_of[case] += 1
            file_id = f"{case}/file-{files_of[case]}"
            content = digest(f"{spec.seed}:{file_id}".encode())
            tx = Transaction(kind, sender, ts, case=case, file_id=file_id, content=content,
                             current_stage=stage.value)
            if ok:
                tokens_of[case].append(original_token_id(case, file_id, content, ts))
        elif kind is TxKind.ANALYSIS:
            pool = tokens_of[case]
            parents = tuple(rng.sample(pool, rng.randint(1, min(3, len(pool)))))
            tx = Transaction(kind, sender, ts, case=case, parents=parents,
                             current_stage=stage.value)
            if ok:
                pool.append(derived_token_id(parents, ts))
        elif kind is TxKind.ACC_REQ:
            tx = Transaction(kind, sender, ts, case=case, resource=rng.choice(list(Right)).value,
                             current_stage=stage.value)
        elif kind is TxKind.STAGE:
            if policy.forward_adjacent_only:
                target = stages[min(stage.ordinal + 1, len(stages) - 1)]
            else:
                target = rng.choice([s for s in stages if s is not stage])
            tx = Transaction(kind, sender, ts, case=case, stage=target.value,
                             current_stage=stage.value)
            if ok and policy.allows_transition(stage, target):
                stage_of[case] = target
        else:
            tx = Transaction(kind, sender, ts, case=case, current_stage=stage.value)
        out.append(tx)

    return Workload(spec, admin, users, setup, out, case_names)


def build_chain(workload: Workload, *, with_case_roots: bool = True,
                policy: PolicyMatrix | None = None, sealer: Sealer | None = None,
                clock=None) -> tuple[Ledger, RecordStore]:
    """Seal a workload: genesis holds the user setup, then fixed-size blocks."""
    contracts = ContractState(policy, admin_keys=[workload.admin.fingerprint], sealer=sealer)
    store = RecordStore()
    config = SealingConfig(workload.spec.tx_per_block, with_case_roots)
    # Provenance transactions are sealed but not served: extraction cost is
    # what the retrieval benchmark measures, separately.
    ledger = Ledger(contracts, store, config, clock=clock or (lambda: BASE_TIME_MS),
                    serve_provenance=False)
    for tx in workload.setup:
        ledger.submit_transaction(tx)
    ledger.seal_block(limit=len(workload.setup))
    for tx in workload.transactions:
        ledger.submit_transaction(tx)
    ledger.seal_all()
    return ledger, store
