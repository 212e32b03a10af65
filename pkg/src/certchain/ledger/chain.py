"""Single-validator ledger: accounts, trustlines, issued asset, closes.

The network is private and permissioned. One authority closes ledgers, there
are no fees and no native currency, and whole-token integer amounts are the
only unit. Accounts created through the (controller-only) create-account
operation start with a trustline for the network's issued asset, so a fresh
participant can receive tokens without first submitting a self-signed
opt-in; the change-trust operation remains available for explicit opt-ins.

The issuing account holds no trustline of its own: payments out of it mint
against the fixed supply cap and payments into it retire tokens, with the
running totals tracked as issued and redeemed counters. After every close
the conservation identity ``issued == sum(balances) + redeemed`` is checked.

Transactions that reach a block but fail (for example over-spending) are
recorded with an error result rather than dropped, and still consume the
source sequence number, which is what makes replays permanently invalid.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..crypto import SigningKeyPair
from .model import (
    RESULT_ACCOUNT_EXISTS,
    RESULT_APPLIED,
    RESULT_BAD_SEQUENCE,
    RESULT_INSUFFICIENT_BALANCE,
    RESULT_NOT_CONTROLLER,
    RESULT_NO_TRUSTLINE,
    RESULT_SUPPLY_EXHAUSTED,
    RESULT_UNKNOWN_ASSET,
    RESULT_UNKNOWN_DESTINATION,
    AccountId,
    Asset,
    ChangeTrust,
    CreateAccount,
    LedgerBlock,
    Payment,
    PendingReceipt,
    SignedTransaction,
    TransactionRecord,
    VerificationReport,
)
from .storage import BlockLog, ChainCorrupt, ChainHeader

DEFAULT_CLOSE_INTERVAL_MS = 5000
KYC_ASSET_CODE = "KYC"
GENESIS_PREV_HASH = b"\x00" * 32


class LedgerError(Exception):
    code = "LEDGER_ERROR"


class EmptyNetworkId(LedgerError):
    code = "EMPTY_NETWORK_ID"


class ZeroSupply(LedgerError):
    code = "ZERO_SUPPLY"


class BadSignature(LedgerError):
    code = "BAD_SIGNATURE"


class UnknownSource(LedgerError):
    code = "UNKNOWN_SOURCE"


class BadSequence(LedgerError):
    code = "BAD_SEQUENCE"


class UnknownAccount(LedgerError):
    code = "UNKNOWN_ACCOUNT"


class NoTrustline(LedgerError):
    code = "NO_TRUSTLINE"


class TransactionNotFound(LedgerError):
    code = "TX_NOT_FOUND"


@dataclass
class _Account:
    sequence: int = 0
    trustlines: dict[Asset, int] = field(default_factory=dict)

    def copy(self) -> "_Account":
        return _Account(self.sequence, dict(self.trustlines))


class Ledger:
    """In-memory ledger state with optional append-only disk log."""

    def __init__(
        self,
        network_id: str,
        controller_account: AccountId,
        kyc_supply: int,
        log: BlockLog | None = None,
    ) -> None:
        if not network_id:
            raise EmptyNetworkId("network_id must be non-empty")
        if kyc_supply < 1:
            raise ZeroSupply("kyc_supply must be >= 1")
        self.network_id = network_id
        self.controller_account = controller_account
        self.kyc_supply = kyc_supply
        self.kyc_asset = Asset(KYC_ASSET_CODE, controller_account)
        self._lock = threading.RLock()
        self._accounts: dict[AccountId, _Account] = {controller_account: _Account()}
        self._issued = 0
        self._redeemed = 0
        self._blocks: list[LedgerBlock] = []
        self._records: dict[bytes, TransactionRecord] = {}
        self._queue: list[tuple[SignedTransaction, bytes]] = []
        self._pending_per_source: dict[AccountId, int] = {}
        self._log = log
        self._timer_stop: threading.Event | None = None
        self._timer_thread: threading.Thread | None = None

    # -- construction -------------------------------------------------

    @classmethod
    def create_network(
        cls,
        network_id: str,
        controller_keys: SigningKeyPair,
        kyc_supply: int,
        log_path: Path | None = None,
    ) -> "Ledger":
        """Genesis: issuing account exists, asset declared, no blocks closed.

        Only the public half of ``controller_keys`` is retained; signing
        stays with the caller.
        """
        controller = AccountId(controller_keys.public_key)
        log = None
        if log_path is not None:
            log = BlockLog.create(
                log_path, ChainHeader(network_id, controller.value, kyc_supply)
            )
        return cls(network_id, controller, kyc_supply, log=log)

    @classmethod
    def load(cls, log_path: Path) -> "Ledger":
        """Rebuild state by replaying the persisted chain; digests must match."""
        log, blocks = BlockLog.load(log_path)
        header = log.header
        ledger = cls(
            header.network_id,
            AccountId(header.controller_pub),
            header.kyc_supply,
            log=None,
        )
        for block in blocks:
            ledger._replay_block(block)
        ledger._log = log
        return ledger

    # -- submission ---------------------------------------------------

    def submit(self, stx: SignedTransaction) -> PendingReceipt:
        """Validate and queue for the next close; returns the transaction hash."""
        tx_hash = stx.tx.hash(self.network_id)
        with self._lock:
            if not stx.verify(self.network_id):
                raise BadSignature("signature does not verify under source key")
            account = self._accounts.get(stx.tx.source)
            if account is None:
                raise UnknownSource(f"unknown source {stx.tx.source.display}")
            pending = self._pending_per_source.get(stx.tx.source, 0)
            expected = account.sequence + pending + 1
            if stx.tx.sequence != expected:
                raise BadSequence(
                    f"sequence {stx.tx.sequence}, expected {expected}"
                )
            self._queue.append((stx, tx_hash))
            self._pending_per_source[stx.tx.source] = pending + 1
        return PendingReceipt(tx_hash=tx_hash)

    # -- close --------------------------------------------------------

    def close_ledger(self, now_ms: int | None = None) -> LedgerBlock:
        """Apply queued transactions FIFO and append a new chained block."""
        if now_ms is None:
            now_ms = int(time.time() * 1000)
        with self._lock:
            drained = self._queue
            self._queue = []
            self._pending_per_source = {}
            tx_hashes = []
            txs = []
            for stx, tx_hash in drained:
                result = self._include_tx(stx)
                txs.append(stx)
                tx_hashes.append(tx_hash)
                self._records[tx_hash] = TransactionRecord(
                    tx_hash=tx_hash,
                    ledger_sequence=len(self._blocks) + 1,
                    stx=stx,
                    result=result,
                )
            sequence = len(self._blocks) + 1
            prev_hash = (
                self._blocks[-1].block_digest if self._blocks else GENESIS_PREV_HASH
            )
            block = LedgerBlock(
                sequence=sequence,
                prev_hash=prev_hash,
                close_time_ms=now_ms,
                txs=tuple(txs),
                block_digest=LedgerBlock.compute_digest(
                    sequence, prev_hash, now_ms, tx_hashes
                ),
            )
            self._blocks.append(block)
            if self._log is not None:
                self._log.append(block)
            self._assert_conservation()
            return block

    def _include_tx(self, stx: SignedTransaction) -> str:
        tx = stx.tx
        account = self._accounts.get(tx.source)
        if account is None or tx.sequence != account.sequence + 1:
            return RESULT_BAD_SEQUENCE
        account.sequence += 1  # consumed by inclusion, even on failure
        return self._apply_operations(tx)

    def _apply_operations(self, tx) -> str:
        """All-or-nothing application of a transaction's operations."""
        staged: dict[AccountId, _Account] = {}
        issued = self._issued
        redeemed = self._redeemed

        def staged_account(account_id: AccountId) -> _Account | None:
            if account_id in staged:
                return staged[account_id]
            live = self._accounts.get(account_id)
            if live is None:
                return None
            staged[account_id] = live.copy()
            return staged[account_id]

        for op in tx.operations:
            if isinstance(op, CreateAccount):
                if tx.source != self.controller_account:
                    return RESULT_NOT_CONTROLLER
                if op.new_id in staged or op.new_id in self._accounts:
                    return RESULT_ACCOUNT_EXISTS
                staged[op.new_id] = _Account(trustlines={self.kyc_asset: 0})
            elif isinstance(op, ChangeTrust):
                if op.asset != self.kyc_asset:
                    return RESULT_UNKNOWN_ASSET
                source = staged_account(tx.source)
                assert source is not None
                source.trustlines.setdefault(op.asset, 0)
            elif isinstance(op, Payment):
                if op.asset != self.kyc_asset:
                    return RESULT_UNKNOWN_ASSET
                if tx.source == self.controller_account:
                    if issued + op.amount > self.kyc_supply:
                        return RESULT_SUPPLY_EXHAUSTED
                    issued += op.amount
                else:
                    source = staged_account(tx.source)
                    assert source is not None
                    balance = source.trustlines.get(op.asset)
                    if balance is None:
                        return RESULT_NO_TRUSTLINE
                    if balance < op.amount:
                        return RESULT_INSUFFICIENT_BALANCE
                    source.trustlines[op.asset] = balance - op.amount
                if op.destination == self.controller_account:
                    redeemed += op.amount
                else:
                    destination = staged_account(op.destination)
                    if destination is None:
                        return RESULT_UNKNOWN_DESTINATION
                    if op.asset not in destination.trustlines:
                        return RESULT_NO_TRUSTLINE
                    destination.trustlines[op.asset] += op.amount
            else:  # pragma: no cover - parser admits only the three kinds
                raise LedgerError(f"unknown operation {op!r}")

        self._accounts.update(staged)
        self._issued = issued
        self._redeemed = redeemed
        return RESULT_APPLIED

    def _replay_block(self, block: LedgerBlock) -> None:
        expected_prev = (
            self._blocks[-1].block_digest if self._blocks else GENESIS_PREV_HASH
        )
        tx_hashes = [stx.tx.hash(self.network_id) for stx in block.txs]
        recomputed = LedgerBlock.compute_digest(
            block.sequence, block.prev_hash, block.close_time_ms, tx_hashes
        )
        if (
            block.sequence != len(self._blocks) + 1
            or block.prev_hash != expected_prev
            or recomputed != block.block_digest
        ):
            raise ChainCorrupt(f"block {block.sequence} fails digest or linkage")
        for stx, tx_hash in zip(block.txs, tx_hashes):
            result = self._include_tx(stx)
            self._records[tx_hash] = TransactionRecord(
                tx_hash=tx_hash,
                ledger_sequence=block.sequence,
                stx=stx,
                result=result,
            )
        self._blocks.append(block)
        self._assert_conservation()

    # -- queries ------------------------------------------------------

    def get_transaction(self, tx_hash: bytes) -> TransactionRecord:
        with self._lock:
            record = self._records.get(tx_hash)
        if record is None:
            raise TransactionNotFound(tx_hash.hex())
        return record

    def get_balance(self, account_id: AccountId, asset: Asset) -> int:
        with self._lock:
            account = self._accounts.get(account_id)
            if account is None:
                raise UnknownAccount(account_id.display)
            balance = account.trustlines.get(asset)
            if balance is None:
                raise NoTrustline(f"{account_id.display} does not trust {asset.code}")
            return balance

    def account_sequence(self, account_id: AccountId) -> int:
        with self._lock:
            account = self._accounts.get(account_id)
            if account is None:
                raise UnknownAccount(account_id.display)
            return account.sequence

    def account_trustlines(self, account_id: AccountId) -> dict[Asset, int]:
        with self._lock:
            account = self._accounts.get(account_id)
            if account is None:
                raise UnknownAccount(account_id.display)
            return dict(account.trustlines)

    def account_exists(self, account_id: AccountId) -> bool:
        with self._lock:
            return account_id in self._accounts

    @property
    def issued(self) -> int:
        with self._lock:
            return self._issued

    @property
    def redeemed(self) -> int:
        with self._lock:
            return self._redeemed

    @property
    def blocks(self) -> list[LedgerBlock]:
        with self._lock:
            return list(self._blocks)

    def kyc_balances(self) -> dict[AccountId, int]:
        """Non-issuer balances of the issued asset; basis of conservation checks."""
        with self._lock:
            return {
                account_id: account.trustlines[self.kyc_asset]
                for account_id, account in self._accounts.items()
                if account_id != self.controller_account
                and self.kyc_asset in account.trustlines
            }

    def verify_chain(self) -> VerificationReport:
        """Recompute every digest, link, and signature over the closed chain."""
        with self._lock:
            blocks = list(self._blocks)
        prev = GENESIS_PREV_HASH
        for index, block in enumerate(blocks):
            tx_hashes = [stx.tx.hash(self.network_id) for stx in block.txs]
            recomputed = LedgerBlock.compute_digest(
                block.sequence, block.prev_hash, block.close_time_ms, tx_hashes
            )
            intact = (
                block.sequence == index + 1
                and block.prev_hash == prev
                and recomputed == block.block_digest
                and all(stx.verify(self.network_id) for stx in block.txs)
            )
            if not intact:
                return VerificationReport(ok=False, first_bad_block=block.sequence)
            prev = block.block_digest
        return VerificationReport(ok=True)

    def _assert_conservation(self) -> None:
        total = sum(self.kyc_balances().values())
        if self._issued != total + self._redeemed:
            raise LedgerError(
                f"conservation broken: issued={self._issued} "
                f"balances={total} redeemed={self._redeemed}"
            )

    # -- close timer ----------------------------------------------------

    def start_timer(self, interval_ms: int = DEFAULT_CLOSE_INTERVAL_MS) -> None:
        """Close ledgers on a fixed cadence until :meth:`stop_timer`."""
        if self._timer_thread is not None:
            raise LedgerError("timer already running")
        stop = threading.Event()
        interval = interval_ms / 1000.0

        def loop() -> None:
            next_close = time.monotonic() + interval
            while not stop.wait(max(0.0, next_close - time.monotonic())):
                self.close_ledger(int(time.time() * 1000))
                next_close += interval

        thread = threading.Thread(target=loop, name="ledger-close-timer", daemon=True)
        self._timer_stop = stop
        self._timer_thread = thread
        thread.start()

    def stop_timer(self) -> None:
        if self._timer_thread is None:
            return
        assert self._timer_stop is not None
        self._timer_stop.set()
        self._timer_thread.join()
        self._timer_thread = None
        self._timer_stop = None
