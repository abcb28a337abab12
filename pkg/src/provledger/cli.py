"""Batch command line over a persisted chain directory.

Layout of ``--data-dir``::

    blocks/<i>.json   sealed blocks (the source of truth)
    store/            off-chain record files + index.json
    keys/<user>.key   raw X25519 private key, hex; <user>.pub alongside
    policy.json       role x stage rights matrix
    config.json       tx_per_block, admin key fingerprints, case-root toggle
    mempool.jsonl     queued transactions, one JSON object per line
    .lock             held for the duration of a command

Every invocation rebuilds contract state by replaying blocks/ (which also
re-checks every header), so nothing besides the blocks needs to be trusted.
Exit status: 0 ok, 1 domain error (unknown case, compromised store, ...),
2 usage error.
"""
from __future__ import annotations

import argparse
import fcntl
import json
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Sequence

from .bench import (DEFAULT_BLOCKS_GRID, DEFAULT_CASES_GRID, run_overhead_benchmark,
                    run_retrieval_benchmark, run_txtime_benchmark, write_csv)
from .contracts import ContractState
from .core import PublicKey, Transaction, TxKind, digest
from .errors import LedgerError
from .extraction import Method, extract
from .ledger import Ledger, SealingConfig, records_by_case
from .rbac import PolicyMatrix, Role, Stage
from .sealing import X25519Sealer, generate_keypair
from .store import RecordStore
from .workload import WorkloadSpec

ADMIN = "admin"
_KIND_NAMES = {
    "initial-upload": TxKind.INITIAL_UPLOAD,
    "file-upload": TxKind.FILE_UPLOAD,
    "analysis": TxKind.ANALYSIS,
    "acc-req": TxKind.ACC_REQ,
    "stage": TxKind.STAGE,
    "provenance": TxKind.PROVENANCE,
}


class UsageError(Exception):
    pass


class NotInitialized(LedgerError):
    pass


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


# --- data directory -----------------------------------------------------------

class DataDir:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.blocks = self.root / "blocks"
        self.store = self.root / "store"
        self.keys = self.root / "keys"
        self.policy = self.root / "policy.json"
        self.config = self.root / "config.json"
        self.mempool = self.root / "mempool.jsonl"

    @property
    def initialized(self) -> bool:
        return self.config.exists()

    @contextmanager
    def locked(self) -> Iterator[None]:
        self.root.mkdir(parents=True, exist_ok=True)
        with open(self.root / ".lock", "w") as fh:
            try:
                fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except BlockingIOError:
                raise LedgerError(f"{self.root} is in use by another process") from None
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    # keys

    def new_key(self, user: str) -> PublicKey:
        if not user or "/" in user or user.startswith("."):
            raise UsageError(f"bad user name {user!r}")
        path = self.keys / f"{user}.key"
        if path.exists():
            raise LedgerError(f"key for {user!r} already exists")
        self.keys.mkdir(parents=True, exist_ok=True)
        priv, pub = generate_keypair()
        path.write_text(priv.hex() + "\n")
        os.chmod(path, 0o600)
        (self.keys / f"{user}.pub").write_text(pub.hex() + "\n")
        return pub

    def public_key(self, user: str) -> PublicKey:
        path = self.keys / f"{user}.pub"
        if not path.exists():
            raise LedgerError(f"no key for user {user!r}")
        return PublicKey.from_hex(path.read_text().strip())

    # mempool

    def read_mempool(self) -> list[Transaction]:
        if not self.mempool.exists():
            return []
        return [Transaction.from_dict(json.loads(l))
                for l in self.mempool.read_text().splitlines() if l.strip()]

    def write_mempool(self, txs: Sequence[Transaction]) -> None:
        self.mempool.write_text("".join(json.dumps(t.to_dict(), sort_keys=True) + "\n" for t in txs))


class Session:
    """Chain state replayed from disk plus the on-disk off-chain store."""

    def __init__(self, data: DataDir):
        if not data.initialized:
            raise NotInitialized(f"{data.root} is not initialized; run init")
        self.data = data
        self.cfg = json.loads(data.config.read_text())
        self.policy = PolicyMatrix.load(data.policy)
        contracts = ContractState(self.policy, admin_keys=[bytes.fromhex(k) for k in self.cfg["admin_keys"]],
                                  sealer=X25519Sealer())
        config = SealingConfig(self.cfg["tx_per_block"], self.cfg.get("with_case_roots", True))
        self.ledger = Ledger(contracts, RecordStore(), config)
        self.ledger.replay(Ledger.load_blocks(data.blocks))
        if (data.store / "index.json").exists():
            self.store = RecordStore.load(data.store)
        else:
            # Derived data was removed: rebuild it from the chain.
            self.store = self.ledger.store
            self.store.save(data.store)

    def seal(self, count: int | None) -> dict[str, Any]:
        queued = self.data.read_mempool()
        if not queued:
            raise LedgerError("mempool is empty")
        for tx in queued:
            self.ledger.submit_transaction(tx)
        start = len(self.ledger.blocks)
        rejected_before = len(self.ledger.rejected)
        sealed = []
        while self.ledger.mempool and (count is None or len(sealed) < count):
            block = self.ledger.seal_block()
            sealed.append(block)
            if self.store is self.ledger.store:
                continue
            for case, recs in records_by_case(block.records).items():
                self.store.append_block_records(case, block.index, recs,
                                                block.header.case_roots.get(case))
        self.ledger.save_blocks(self.data.blocks, start)
        self.store.save(self.data.store)
        self.data.write_mempool(list(self.ledger.mempool))
        return {
            "blocks": [b.index for b in sealed],
            "transactions": sum(len(b.transactions) for b in sealed),
            "rejected": [{"tx": t.id.hex(), "error": f"{type(e).__name__}: {e}"}
                         for t, e in self.ledger.rejected[rejected_before:]],
            "queued": len(self.ledger.mempool),
        }


# --- commands -----------------------------------------------------------------

def cmd_init(args: argparse.Namespace) -> dict[str, Any]:
    data = DataDir(args.data_dir)
    if data.initialized:
        raise LedgerError(f"{data.root} is already initialized")
    policy = PolicyMatrix.load(args.policy) if args.policy else PolicyMatrix.default()
    if args.tx_per_block < 1:
        raise UsageError("--tx-per-block must be >= 1")
    for d in (data.blocks, data.store, data.keys):
        d.mkdir(parents=True, exist_ok=True)
    data.policy.write_text(json.dumps(policy.to_dict(), indent=1, sort_keys=True) + "\n")
    admin = data.new_key(ADMIN)
    data.config.write_text(json.dumps({
        "tx_per_block": args.tx_per_block,
        "admin_keys": [admin.fingerprint.hex()],
        "with_case_roots": not args.no_case_roots,
    }, indent=1, sort_keys=True) + "\n")
    # Genesis: the administrator registers itself.
    data.write_mempool([Transaction(TxKind.SETUP, admin, _now_ms(), subject=admin,
                                    role=Role(args.role).value)])
    result = Session(data).seal(1)
    return {"data_dir": str(data.root), "admin": admin.fingerprint.hex(), "role": args.role,
            "genesis": result["blocks"][0]}


def _sender(data: DataDir, name: str | None) -> PublicKey:
    return data.public_key(name or ADMIN)


def _enqueue(data: DataDir, tx: Transaction) -> dict[str, Any]:
    missing = tx.missing_fields()
    if missing:
        raise UsageError(f"{tx.kind.value} needs {', '.join(missing)}")
    queued = data.read_mempool()
    queued.append(tx)
    data.write_mempool(queued)
    return {"queued": tx.id.hex(), "kind": tx.kind.value, "position": len(queued) - 1}


def cmd_register(args: argparse.Namespace) -> dict[str, Any]:
    data = DataDir(args.data_dir)
    Session(data)  # refuses uninitialized or inconsistent directories
    key = data.new_key(args.user)
    out = _enqueue(data, Transaction(TxKind.SETUP, _sender(data, args.sender), args.timestamp or _now_ms(),
                                     subject=key, role=Role(args.role).value))
    out.update(user=args.user, fingerprint=key.fingerprint.hex(), role=args.role)
    return out


def _content(args: argparse.Namespace) -> bytes | None:
    if args.content_file:
        return Path(args.content_file).read_bytes()
    if args.content:
        try:
            return bytes.fromhex(args.content)
        except ValueError:
            raise UsageError("--content must be hex") from None
    return None


def cmd_submit(args: argparse.Namespace) -> dict[str, Any]:
    data = DataDir(args.data_dir)
    session = Session(data)
    kind = _KIND_NAMES[args.kind]
    content = _content(args)
    if kind is TxKind.INITIAL_UPLOAD and content is None:
        content = digest(args.case.encode("utf-8"))
    current = args.current_stage
    if current is None and kind is not TxKind.INITIAL_UPLOAD:
        stage = session.ledger.contracts.stages.get(args.case)
        current = stage.value if stage is not None else None
    try:
        parents = tuple(bytes.fromhex(p) for p in args.parents.split(",")) if args.parents else ()
    except ValueError:
        raise UsageError("--parents must be comma-separated hex token ids") from None
    tx = Transaction(kind, _sender(data, args.sender), args.timestamp or _now_ms(), case=args.case,
                     file_id=args.file_id, content=content, parents=parents, stage=args.stage,
                     current_stage=current, resource=args.resource)
    return _enqueue(data, tx)


def cmd_seal(args: argparse.Namespace) -> dict[str, Any]:
    return Session(DataDir(args.data_dir)).seal(None if args.all else 1)


def cmd_extract(args: argparse.Namespace) -> dict[str, Any]:
    session = Session(DataDir(args.data_dir))
    result = extract(session.ledger, session.store, args.case, Method(args.method))
    out: dict[str, Any] = {
        "case": args.case,
        "method": result.method.value,
        "records": [r.to_dict() for r in result.records],
        "count": len(result.records),
        "blocks_scanned": result.blocks_scanned,
        "elapsed_ns": result.elapsed_ns,
    }
    if result.verification is not None:
        out["verification"] = result.verification.to_dict()
        if result.compromised:
            out["error"] = "off-chain records do not match the chain"
    return out


def cmd_verify(args: argparse.Namespace) -> dict[str, Any]:
    session = Session(DataDir(args.data_dir))
    root, _ = session.ledger.latest_case_root(args.case)
    if args.case not in session.store:
        raise LedgerError(f"no off-chain records for {args.case}")
    report = session.store.verify_case_records(args.case, root,
                                               session.ledger.case_root_history(args.case))
    out = report.to_dict()
    if not report.verified:
        out["error"] = "off-chain records do not match the chain"
    return out


def cmd_root(args: argparse.Namespace) -> dict[str, Any]:
    session = Session(DataDir(args.data_dir))
    root, index = session.ledger.latest_case_root(args.case)
    return {"case": args.case, "root": root.hex(), "block": index}


def cmd_bench(args: argparse.Namespace) -> dict[str, Any]:
    if args.experiment == "retrieval":
        rows = run_retrieval_benchmark(args.blocks or DEFAULT_BLOCKS_GRID,
                                       args.cases or DEFAULT_CASES_GRID,
                                       reps=args.reps or 30, seed=args.seed,
                                       tx_per_block=args.tx_per_block)
    elif args.experiment == "overhead":
        spec = WorkloadSpec((args.cases or [100])[0], (args.blocks or [1000])[0],
                            args.tx_per_block, args.seed)
        rows = run_overhead_benchmark(spec, reps=args.reps or 5)
    else:
        rows = run_txtime_benchmark(WorkloadSpec(1, 1, seed=args.seed), reps=args.reps or 100)
    out_path = Path(args.out)
    write_csv(rows, out_path)
    result: dict[str, Any] = {"csv": str(out_path), "rows": len(rows)}
    if not args.no_plot:
        from .plotting import plot_rows
        result["figure"] = str(plot_rows(rows, out_path.with_suffix(".png")))
    return result


def cmd_policy(args: argparse.Namespace) -> dict[str, Any]:
    if args.action == "check":
        if not args.file:
            raise UsageError("policy check needs a file")
        policy = PolicyMatrix.load(args.file)
    elif args.file:
        policy = PolicyMatrix.load(args.file)
    else:
        data = DataDir(args.data_dir)
        policy = PolicyMatrix.load(data.policy) if data.initialized else PolicyMatrix.default()
    return {"policy": policy.to_dict()} if args.action == "show" else {"valid": True}


# --- parsing and output -------------------------------------------------------

def _positive(s: str) -> int:
    n = int(s)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return n


def _grid(s: str) -> list[int]:
    try:
        return [_positive(x) for x in s.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="provledger", description=__doc__.split("\n\n")[0])
    p.add_argument("--data-dir", default=os.environ.get("PROVLEDGER_DIR", "ledger-data"),
                   help="chain directory (default: $PROVLEDGER_DIR or ./ledger-data)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    roles = [r.value for r in Role]
    stages = [s.value for s in Stage]

    s = sub.add_parser("init", help="create the directory layout, admin key and genesis block")
    s.add_argument("--tx-per-block", type=int, default=10)
    s.add_argument("--policy", help="policy JSON to install (default: built-in matrix)")
    s.add_argument("--role", choices=roles, default=Role.LAW_ENFORCEMENT.value,
                   help="role registered for the admin key")
    s.add_argument("--no-case-roots", action="store_true",
                   help="seal headers without per-case roots (off-chain verification unavailable)")
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("register", help="create a user key and queue its Setup transaction")
    s.add_argument("--user", required=True)
    s.add_argument("--role", required=True, choices=roles)
    s.add_argument("--as", dest="sender", help="sending user (default: admin)")
    s.add_argument("--timestamp", type=int, help="milliseconds since epoch (default: now)")
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("submit", help="queue a case transaction")
    s.add_argument("--kind", required=True, choices=sorted(_KIND_NAMES))
    s.add_argument("--case", required=True)
    s.add_argument("--as", dest="sender", help="sending user (default: admin)")
    s.add_argument("--stage", choices=stages, help="initial stage, or target stage for kind=stage")
    s.add_argument("--current-stage", choices=stages,
                   help="stage claimed by the sender (default: the case's stage on chain)")
    s.add_argument("--file-id")
    s.add_argument("--content", help="file content digest, hex")
    s.add_argument("--content-file", help="read content bytes from a file")
    s.add_argument("--parents", help="comma-separated parent token ids (kind=analysis)")
    s.add_argument("--resource", help="requested right (kind=acc-req)")
    s.add_argument("--timestamp", type=int, help="milliseconds since epoch (default: now)")
    s.set_defaults(func=cmd_submit)

    s = sub.add_parser("seal", help="seal queued transactions into a block")
    s.add_argument("--all", action="store_true", help="seal until the mempool is empty")
    s.set_defaults(func=cmd_seal)

    s = sub.add_parser("extract", help="retrieve a case's provenance records")
    s.add_argument("--case", required=True)
    s.add_argument("--method", choices=[m.value for m in Method], default=Method.OFFCHAIN_VERIFIED.value)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("verify", help="check the off-chain records of a case against the chain")
    s.add_argument("--case", required=True)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("root", help="print a case's latest chained root")
    s.add_argument("--case", required=True)
    s.set_defaults(func=cmd_root)

    s = sub.add_parser("bench", help="run a benchmark, write CSV (and a PNG next to it)")
    s.add_argument("experiment", choices=["retrieval", "overhead", "txtime"])
    s.add_argument("--out", required=True, help="CSV path; the figure goes to the same stem .png")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reps", type=_positive, help="default: 30 retrieval, 5 overhead, 100 txtime")
    s.add_argument("--blocks", type=_grid, help="comma-separated block counts")
    s.add_argument("--cases", type=_grid, help="comma-separated case counts")
    s.add_argument("--tx-per-block", type=_positive, default=10)
    s.add_argument("--no-plot", action="store_true", help="skip the PNG")
    s.set_defaults(func=cmd_bench, unlocked=True)

    s = sub.add_parser("policy", help="show or validate a policy matrix")
    s.add_argument("action", choices=["show", "check"])
    s.add_argument("file", nargs="?")
    s.set_defaults(func=cmd_policy, unlocked=True)
    return p


def _print_text(result: dict[str, Any]) -> None:
    for key, value in result.items():
        if key == "records":
            for r in value:
                print(json.dumps(r, sort_keys=True))
        elif isinstance(value, (dict, list)):
            print(f"{key}: {json.dumps(value, sort_keys=True)}")
        else:
            print(f"{key}: {value}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "unlocked", False):
            result = args.func(args)
        else:
            with DataDir(args.data_dir).locked():
                result = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"provledger: error: {exc}", file=sys.stderr)
        return 2
    except (LedgerError, OSError, ValueError) as exc:
        if args.json:
            print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        print(f"provledger: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        _print_text(result)
    return 1 if "error" in result else 0


if __name__ == "__main__":
    sys.exit(main())
