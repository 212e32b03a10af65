"""Ledger domain types and their canonical byte encoding.

Wire formats (all integers big-endian, ``bstr`` = u32 length prefix):

    asset    := bstr(code_ascii) || issuer(32)
    memo     := 0x00                       (no memo)
              | 0x01 || bytes(32)          (hash memo)
    op       := 0x00 || new_id(32)                          (create account)
              | 0x01 || asset                               (change trust)
              | 0x02 || destination(32) || asset || u64(amount)   (payment)
    tx       := source(32) || u64(sequence) || memo || u16(op_count) || op*
    stx      := bstr(tx) || bstr(signature)

    tx_hash  := sha256( bstr(network_id_utf8) || tx )

Signatures are Ed25519 over the 32-byte ``tx_hash`` and are excluded from
the hash preimage, so the same transaction keeps the same hash regardless
of signature bytes. Including the network id in the preimage means the same
transaction submitted to two differently-named networks gets two hashes.

    block_body   := u64(sequence) || prev_hash(32) || u64(close_time_ms)
                    || u32(tx_count) || bstr(stx)*
    block_digest := sha256( u64(sequence) || prev_hash || u64(close_time_ms)
                    || tx_hash* )
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from ..codec import CodecError, Reader, bstr, u16, u32, u64
from ..crypto import SigningKeyPair, digest256, verify_signature

MEMO_LEN = 32
MAX_OPERATIONS = 16
ACCOUNT_DISPLAY_PREFIX = "GA"

RESULT_APPLIED = "APPLIED"
RESULT_INSUFFICIENT_BALANCE = "INSUFFICIENT_BALANCE"
RESULT_NO_TRUSTLINE = "NO_TRUSTLINE"
RESULT_UNKNOWN_DESTINATION = "UNKNOWN_DESTINATION"
RESULT_UNKNOWN_ASSET = "UNKNOWN_ASSET"
RESULT_SUPPLY_EXHAUSTED = "SUPPLY_EXHAUSTED"
RESULT_NOT_CONTROLLER = "NOT_CONTROLLER"
RESULT_ACCOUNT_EXISTS = "ACCOUNT_EXISTS"
RESULT_BAD_SEQUENCE = "BAD_SEQUENCE"


@dataclass(frozen=True, order=True)
class AccountId:
    """A 32-byte Ed25519 public key acting as the account identity."""

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != 32:
            raise ValueError("account id must be 32 bytes")

    @property
    def display(self) -> str:
        return ACCOUNT_DISPLAY_PREFIX + self.value.hex()

    @classmethod
    def parse(cls, text: str) -> "AccountId":
        if not text.startswith(ACCOUNT_DISPLAY_PREFIX) or len(text) != 66:
            raise ValueError(f"bad account id: {text!r}")
        return cls(bytes.fromhex(text[len(ACCOUNT_DISPLAY_PREFIX) :]))

    def __repr__(self) -> str:  # keep logs readable
        return f"AccountId({self.display})"


@dataclass(frozen=True)
class Asset:
    code: str
    issuer: AccountId

    def __post_init__(self) -> None:
        if not 1 <= len(self.code) <= 12 or not self.code.isascii():
            raise ValueError("asset code must be 1-12 ASCII chars")

    def to_bytes(self) -> bytes:
        return bstr(self.code.encode("ascii")) + self.issuer.value

    @classmethod
    def read(cls, r: Reader) -> "Asset":
        code = r.bstr().decode("ascii")
        return cls(code=code, issuer=AccountId(r.take(32)))


class MemoKind(Enum):
    NONE = 0
    HASH = 1


@dataclass(frozen=True)
class Memo:
    kind: MemoKind
    data: bytes = b""

    def __post_init__(self) -> None:
        if self.kind is MemoKind.HASH and len(self.data) != MEMO_LEN:
            raise ValueError(f"hash memo must be {MEMO_LEN} bytes")
        if self.kind is MemoKind.NONE and self.data:
            raise ValueError("empty memo carries no bytes")

    @classmethod
    def none(cls) -> "Memo":
        return cls(MemoKind.NONE)

    @classmethod
    def hash(cls, data: bytes) -> "Memo":
        return cls(MemoKind.HASH, data)

    def to_bytes(self) -> bytes:
        if self.kind is MemoKind.NONE:
            return b"\x00"
        return b"\x01" + self.data

    @classmethod
    def read(cls, r: Reader) -> "Memo":
        tag = r.take(1)[0]
        if tag == 0:
            return cls.none()
        if tag == 1:
            return cls.hash(r.take(MEMO_LEN))
        raise CodecError(f"unknown memo kind {tag}")


@dataclass(frozen=True)
class CreateAccount:
    new_id: AccountId

    def to_bytes(self) -> bytes:
        return b"\x00" + self.new_id.value


@dataclass(frozen=True)
class ChangeTrust:
    asset: Asset

    def to_bytes(self) -> bytes:
        return b"\x01" + self.asset.to_bytes()


@dataclass(frozen=True)
class Payment:
    destination: AccountId
    asset: Asset
    amount: int

    def __post_init__(self) -> None:
        if self.amount < 1:
            raise ValueError("payment amount must be >= 1")

    def to_bytes(self) -> bytes:
        return (
            b"\x02" + self.destination.value + self.asset.to_bytes() + u64(self.amount)
        )


Operation = Union[CreateAccount, ChangeTrust, Payment]


def _read_operation(r: Reader) -> Operation:
    tag = r.take(1)[0]
    if tag == 0:
        return CreateAccount(AccountId(r.take(32)))
    if tag == 1:
        return ChangeTrust(Asset.read(r))
    if tag == 2:
        destination = AccountId(r.take(32))
        asset = Asset.read(r)
        amount = r.u64()
        if amount < 1:
            raise CodecError("payment amount must be >= 1")
        return Payment(destination, asset, amount)
    raise CodecError(f"unknown operation tag {tag}")


@dataclass(frozen=True)
class Transaction:
    source: AccountId
    sequence: int
    operations: tuple[Operation, ...]
    memo: Memo = field(default_factory=Memo.none)

    def __post_init__(self) -> None:
        if not 1 <= len(self.operations) <= MAX_OPERATIONS:
            raise ValueError(f"transaction needs 1-{MAX_OPERATIONS} operations")
        if self.sequence < 1:
            raise ValueError("sequence must be >= 1")

    def to_bytes(self) -> bytes:
        parts = [self.source.value, u64(self.sequence), self.memo.to_bytes()]
        parts.append(u16(len(self.operations)))
        parts.extend(op.to_bytes() for op in self.operations)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transaction":
        r = Reader(data)
        tx = cls.read(r)
        r.expect_end()
        return tx

    @classmethod
    def read(cls, r: Reader) -> "Transaction":
        source = AccountId(r.take(32))
        sequence = r.u64()
        memo = Memo.read(r)
        count = r.u16()
        if not 1 <= count <= MAX_OPERATIONS:
            raise CodecError(f"transaction needs 1-{MAX_OPERATIONS} operations")
        ops = tuple(_read_operation(r) for _ in range(count))
        return cls(source=source, sequence=sequence, operations=ops, memo=memo)

    def hash(self, network_id: str) -> bytes:
        return digest256(bstr(network_id.encode("utf-8")) + self.to_bytes())


@dataclass(frozen=True)
class SignedTransaction:
    tx: Transaction
    signature: bytes

    def to_bytes(self) -> bytes:
        return bstr(self.tx.to_bytes()) + bstr(self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SignedTransaction":
        r = Reader(data)
        stx = cls.read(r)
        r.expect_end()
        return stx

    @classmethod
    def read(cls, r: Reader) -> "SignedTransaction":
        tx = Transaction.from_bytes(r.bstr())
        return cls(tx=tx, signature=r.bstr())

    def verify(self, network_id: str) -> bool:
        return verify_signature(
            self.tx.source.value, self.tx.hash(network_id), self.signature
        )


def sign_transaction(tx: Transaction, keys: SigningKeyPair, network_id: str) -> SignedTransaction:
    if keys.public_key != tx.source.value:
        raise ValueError("signing key does not match transaction source")
    return SignedTransaction(tx=tx, signature=keys.sign(tx.hash(network_id)))


@dataclass(frozen=True)
class LedgerBlock:
    sequence: int
    prev_hash: bytes
    close_time_ms: int
    txs: tuple[SignedTransaction, ...]
    block_digest: bytes

    @staticmethod
    def compute_digest(
        sequence: int, prev_hash: bytes, close_time_ms: int, tx_hashes: list[bytes]
    ) -> bytes:
        return digest256(
            u64(sequence) + prev_hash + u64(close_time_ms) + b"".join(tx_hashes)
        )

    def body_bytes(self) -> bytes:
        parts = [u64(self.sequence), self.prev_hash, u64(self.close_time_ms)]
        parts.append(u32(len(self.txs)))
        parts.extend(bstr(stx.to_bytes()) for stx in self.txs)
        return b"".join(parts)

    def to_bytes(self) -> bytes:
        return self.body_bytes() + self.block_digest

    @classmethod
    def from_bytes(cls, data: bytes) -> "LedgerBlock":
        r = Reader(data)
        sequence = r.u64()
        prev_hash = r.take(32)
        close_time_ms = r.u64()
        count = r.u32()
        txs = tuple(SignedTransaction.from_bytes(r.bstr()) for _ in range(count))
        block_digest = r.take(32)
        r.expect_end()
        return cls(
            sequence=sequence,
            prev_hash=prev_hash,
            close_time_ms=close_time_ms,
            txs=txs,
            block_digest=block_digest,
        )


@dataclass(frozen=True)
class TransactionRecord:
    tx_hash: bytes
    ledger_sequence: int
    stx: SignedTransaction
    result: str

    @property
    def applied(self) -> bool:
        return self.result == RESULT_APPLIED


@dataclass(frozen=True)
class PendingReceipt:
    tx_hash: bytes


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    first_bad_block: int | None = None
