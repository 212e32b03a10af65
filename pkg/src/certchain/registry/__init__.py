"""Durable off-chain registry with journal-backed persistence."""

from .journal import Journal, JournalError, canonical_json
from .records import CompanyRecord, LabRecord, TestRecord, TransferRecord, UserRecord
from .store import (
    FIRST_NUMERIC_ID,
    AlreadyBackfilled,
    AlreadyClaimed,
    DuplicateKey,
    InvalidRecord,
    NotFound,
    RegistryError,
    RegistryStore,
    UnknownUser,
)

__all__ = [
    "AlreadyBackfilled",
    "AlreadyClaimed",
    "CompanyRecord",
    "DuplicateKey",
    "FIRST_NUMERIC_ID",
    "InvalidRecord",
    "Journal",
    "JournalError",
    "LabRecord",
    "NotFound",
    "RegistryError",
    "RegistryStore",
    "TestRecord",
    "TransferRecord",
    "UnknownUser",
    "UserRecord",
    "canonical_json",
]
