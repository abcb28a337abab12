"""Permissioned provenance ledger for digital-evidence chain of custody.

Per-case records live off-chain; each block header carries a chained Merkle
root per case touched, so a case's records can be fetched from the store and
checked against one root instead of scanning the chain.
"""
from .core import BlockHeader, PublicKey, Transaction, TxKind, canonical_serialize, merkle_root
from .errors import LedgerError
from .extraction import (Method, extract, extract_brute_force, extract_offchain_verified,
                         extract_smart_brute_force)
from .ledger import Block, Ledger, SealingConfig, validate_chain
from .rbac import Outcome, PolicyMatrix, Right, Role, Stage, retrieve_access_info
from .records import ProvenanceRecord, RecordKind
from .store import RecordStore, Verdict, VerificationReport
from .workload import WorkloadSpec, build_chain, generate_workload

__version__ = "0.1.0"

__all__ = [
    "Block", "BlockHeader", "Ledger", "LedgerError", "Method", "Outcome", "PolicyMatrix",
    "ProvenanceRecord", "PublicKey", "RecordKind", "RecordStore", "Right", "Role", "SealingConfig",
    "Stage", "Transaction", "TxKind", "Verdict", "VerificationReport", "WorkloadSpec",
    "build_chain", "canonical_serialize", "extract", "extract_brute_force",
    "extract_offchain_verified", "extract_smart_brute_force", "generate_workload",
    "merkle_root", "retrieve_access_info", "validate_chain",
]
