"""Private single-validator ledger with memo-bearing token payments."""

from .chain import (
    DEFAULT_CLOSE_INTERVAL_MS,
    KYC_ASSET_CODE,
    BadSequence,
    BadSignature,
    EmptyNetworkId,
    Ledger,
    LedgerError,
    NoTrustline,
    TransactionNotFound,
    UnknownAccount,
    UnknownSource,
    ZeroSupply,
)
from .model import (
    AccountId,
    Asset,
    ChangeTrust,
    CreateAccount,
    LedgerBlock,
    Memo,
    MemoKind,
    Operation,
    Payment,
    PendingReceipt,
    SignedTransaction,
    Transaction,
    TransactionRecord,
    VerificationReport,
    sign_transaction,
)
from .storage import BlockLog, ChainCorrupt, ChainHeader

__all__ = [
    "AccountId",
    "Asset",
    "BadSequence",
    "BadSignature",
    "BlockLog",
    "ChainCorrupt",
    "ChainHeader",
    "ChangeTrust",
    "CreateAccount",
    "DEFAULT_CLOSE_INTERVAL_MS",
    "EmptyNetworkId",
    "KYC_ASSET_CODE",
    "Ledger",
    "LedgerBlock",
    "LedgerError",
    "Memo",
    "MemoKind",
    "NoTrustline",
    "Operation",
    "Payment",
    "PendingReceipt",
    "SignedTransaction",
    "Transaction",
    "TransactionNotFound",
    "TransactionRecord",
    "UnknownAccount",
    "UnknownSource",
    "VerificationReport",
    "ZeroSupply",
    "sign_transaction",
]
