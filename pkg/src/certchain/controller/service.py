"""The system controller: onboarding, test ingestion, token sale, transfer
orchestration, destination-gated certificate release, and token buy-back.

Every byte that matters is checked on both sides of the trust boundary:
a transfer is only confirmed after the referenced ledger payment has been
fetched and its parties, asset, and memo verified against the stored
transfer row; a certificate is only released to the recorded destination
company, and is additionally sealed to that company's registered key, so a
bypassed authorization check would still yield nothing readable.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

from .. import crypto
from ..crypto import (
    SealedEnvelope,
    SigningKeyPair,
    UserHash,
    derive_user_hash,
    digest256,
    gen_encryption_keypair,
    gen_signing_keypair,
    new_user_hash_nonce,
    open_envelope,
    seal,
    signing_keypair_from_seed,
)
from ..ledger import (
    AccountId,
    CreateAccount,
    Ledger,
    LedgerError,
    Memo,
    MemoKind,
    Payment,
    SignedTransaction,
    Transaction,
    TransactionNotFound,
    TransactionRecord,
    sign_transaction,
)
from ..ledger.model import RESULT_ACCOUNT_EXISTS, RESULT_APPLIED, RESULT_SUPPLY_EXHAUSTED
from ..qr import encode_qr_payload
from ..registry import (
    AlreadyBackfilled as StoreAlreadyBackfilled,
    AlreadyClaimed as StoreAlreadyClaimed,
    CompanyRecord,
    LabRecord,
    NotFound as StoreNotFound,
    RegistryStore,
    TestRecord,
    TransferRecord,
    UserRecord,
)
from ..registry.journal import canonical_json
from .auth import ROLE_COMPANY, ROLE_LAB, ROLE_USER, TokenAuthority
from .config import ControllerConfig

MEMO_PAD = b"\x00" * 16

# Error code -> HTTP status. The single authoritative mapping.
ERROR_STATUS = {
    "AUTH_FAILURE": 401,
    "NOT_OWNER": 403,
    "NOT_DESTINATION": 403,
    "NOT_ACCREDITED": 403,
    "NOT_FOUND": 404,
    "UNKNOWN_LAB": 404,
    "UNKNOWN_USER": 404,
    "UNKNOWN_TEST": 404,
    "UNKNOWN_COMPANY": 404,
    "LEDGER_TX_MISSING": 404,
    "DUPLICATE_KEY": 409,
    "ALREADY_BACKFILLED": 409,
    "ALREADY_CLAIMED": 409,
    "SUPPLY_EXHAUSTED": 409,
    "NOT_BACKFILLED": 409,
    "PAYMENT_REJECTED": 402,
    "DECRYPT_FAILED": 400,
    "MALFORMED_PAYLOAD": 400,
    "NO_VALID_TEST": 400,
    "OVER_LIMIT": 400,
    "EXPIRED": 400,
    "INSUFFICIENT_TOKENS": 400,
    "MEMO_MISMATCH": 400,
    "PARTY_MISMATCH": 400,
    "WRONG_ASSET": 400,
    "WRONG_DIRECTION": 400,
    "AMOUNT_MISMATCH": 400,
    "BAD_PAYLOAD": 400,
    "BAD_SIGNATURE": 400,
    "UNKNOWN_SOURCE": 400,
    "BAD_SEQUENCE": 409,
    "UNKNOWN_ACCOUNT": 404,
    "NO_TRUSTLINE": 404,
    "TX_NOT_FOUND": 404,
}


class ServiceError(Exception):
    def __init__(self, code: str, message: str = "") -> None:
        super().__init__(message or code)
        self.code = code
        self.http_status = ERROR_STATUS.get(code, 400)


@dataclass(frozen=True)
class CertificateDocument:
    """The document a destination company receives, canonically serialized."""

    test_id: str
    user_name: str
    test_type: str
    result: str
    taken_at: int
    valid_until: int
    lab_name: str

    def to_json(self) -> dict:
        return {
            "test_id": self.test_id,
            "user_name": self.user_name,
            "test_type": self.test_type,
            "result": self.result,
            "taken_at": self.taken_at,
            "valid_until": self.valid_until,
            "lab_name": self.lab_name,
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_json())

    @classmethod
    def from_bytes(cls, data: bytes) -> "CertificateDocument":
        obj = json.loads(data.decode("utf-8"))
        return cls(
            test_id=obj["test_id"],
            user_name=obj["user_name"],
            test_type=obj["test_type"],
            result=obj["result"],
            taken_at=obj["taken_at"],
            valid_until=obj["valid_until"],
            lab_name=obj["lab_name"],
        )


def _now_ms() -> int:
    return int(time.time() * 1000)


class ControllerService:
    """Orchestrates registry, ledger, and crypto behind one service surface."""

    def __init__(
        self,
        config: ControllerConfig,
        store: RegistryStore,
        ledger: Ledger,
        controller_keys: SigningKeyPair,
        clock=None,
    ) -> None:
        self.config = config
        self.store = store
        self.ledger = ledger
        self.controller_keys = controller_keys
        self.tokens = TokenAuthority(controller_keys)
        self.clock = clock or _now_ms
        self._controller_lock = threading.Lock()
        self._controller_next_seq: int | None = None

    # -- lifecycle ------------------------------------------------------

    @classmethod
    def create(
        cls, config: ControllerConfig, data_dir: Path, clock=None
    ) -> "ControllerService":
        """Open (or bootstrap) a controller rooted at ``data_dir``."""
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        keys_path = data_dir / "controller-keys.json"
        chain_path = data_dir / "chain.log"
        if keys_path.exists():
            seed = bytes.fromhex(json.loads(keys_path.read_text())["signing_seed"])
            controller_keys = signing_keypair_from_seed(seed)
        else:
            controller_keys = gen_signing_keypair()
            keys_path.write_text(
                json.dumps({"signing_seed": controller_keys.secret_seed.hex()}) + "\n"
            )
        if chain_path.exists():
            ledger = Ledger.load(chain_path)
        else:
            ledger = Ledger.create_network(
                config.network_id, controller_keys, config.kyc_supply,
                log_path=chain_path,
            )
        store = RegistryStore.open(data_dir)
        return cls(config, store, ledger, controller_keys, clock=clock)

    def start(self) -> None:
        if self.config.close_mode == "timer":
            self.ledger.start_timer(self.config.close_interval_ms)

    def stop(self) -> None:
        self.ledger.stop_timer()
        self.store.close()

    # -- controller-signed ledger writes --------------------------------

    def _next_controller_sequence(self) -> int:
        if self._controller_next_seq is None:
            self._controller_next_seq = (
                self.ledger.account_sequence(self.ledger.controller_account) + 1
            )
        seq = self._controller_next_seq
        self._controller_next_seq += 1
        return seq

    def _submit_controller_tx(self, operations, memo=None) -> TransactionRecord:
        with self._controller_lock:
            tx = Transaction(
                source=self.ledger.controller_account,
                sequence=self._next_controller_sequence(),
                operations=tuple(operations),
                memo=memo or Memo.none(),
            )
            stx = sign_transaction(tx, self.controller_keys, self.ledger.network_id)
            try:
                receipt = self.ledger.submit(stx)
            except LedgerError:
                self._controller_next_seq = None  # resync on next use
                raise
        return self._wait_for_record(receipt.tx_hash)

    def _wait_for_record(self, tx_hash: bytes) -> TransactionRecord:
        if self.config.close_mode == "on_demand":
            self.ledger.close_ledger(self.clock())
            return self.ledger.get_transaction(tx_hash)
        deadline = time.monotonic() + (3 * self.config.close_interval_ms + 2000) / 1000
        while True:
            try:
                return self.ledger.get_transaction(tx_hash)
            except TransactionNotFound:
                if time.monotonic() > deadline:
                    raise ServiceError(
                        "LEDGER_TX_MISSING", "transaction did not reach a close"
                    )
                time.sleep(0.025)

    def submit_raw(self, stx: SignedTransaction) -> bytes:
        """Client-signed transaction intake; closes immediately in on-demand mode."""
        try:
            receipt = self.ledger.submit(stx)
        except LedgerError as exc:
            raise ServiceError(exc.code, str(exc)) from exc
        if self.config.close_mode == "on_demand":
            self.ledger.close_ledger(self.clock())
        return receipt.tx_hash

    # -- onboarding -----------------------------------------------------

    def onboard_lab(self, name: str, accreditation_evidence: str) -> dict:
        """Accredit a lab; its channel keypair is generated here and the
        decryption half never leaves the server."""
        if not name:
            raise ServiceError("MALFORMED_PAYLOAD", "lab name required")
        del accreditation_evidence  # reviewed out-of-band; mock accepts any
        pair = gen_encryption_keypair()
        lab_id = f"LAB-{uuid.uuid4().hex[:10]}"
        self.store.put_lab(
            LabRecord(
                lab_id=lab_id,
                name=name,
                server_held_decryption_key=pair.private_key,
                accredited=True,
            )
        )
        return {
            "lab_id": lab_id,
            "lab_encryption_key": pair.public_key.hex(),
            "auth_token": self.tokens.mint(ROLE_LAB, lab_id),
        }

    def onboard_company(self, name: str) -> dict:
        """Register a relying party: encryption keys plus a funded-capable
        ledger account. The encryption private key is returned once."""
        if not name:
            raise ServiceError("MALFORMED_PAYLOAD", "company name required")
        enc_pair = gen_encryption_keypair()
        account_keys = gen_signing_keypair()
        account = AccountId(account_keys.public_key)
        record = self._submit_controller_tx([CreateAccount(account)])
        if record.result != RESULT_APPLIED:
            raise ServiceError("DUPLICATE_KEY", f"account create: {record.result}")
        company_id = f"CMP-{uuid.uuid4().hex[:10]}"
        self.store.put_company(
            CompanyRecord(
                company_id=company_id,
                name=name,
                encryption_public_key=enc_pair.public_key,
                ledger_account=account,
            )
        )
        return {
            "company_id": company_id,
            "encryption_private_key": enc_pair.private_key.hex(),
            "ledger_account": {
                "account_id": account.display,
                "signing_seed": account_keys.secret_seed.hex(),
            },
            "auth_token": self.tokens.mint(ROLE_COMPANY, company_id),
        }

    def register_user(self, name: str, national_id: str, wallet_public_key: bytes) -> dict:
        if not name or not national_id:
            raise ServiceError("MALFORMED_PAYLOAD", "name and national id required")
        account = AccountId(wallet_public_key)
        if self.ledger.account_exists(account):
            raise ServiceError("DUPLICATE_KEY", "wallet key already registered")
        record = self._submit_controller_tx([CreateAccount(account)])
        if record.result == RESULT_ACCOUNT_EXISTS:
            raise ServiceError("DUPLICATE_KEY", "wallet key already registered")
        if record.result != RESULT_APPLIED:
            raise ServiceError("MALFORMED_PAYLOAD", f"account create: {record.result}")
        user_id = f"USR-{uuid.uuid4().hex[:10]}"
        self.store.put_user(
            UserRecord(
                user_id=user_id,
                name=name,
                national_id_digest=digest256(national_id.encode("utf-8")),
                ledger_account=account,
                created_at=self.clock(),
            )
        )
        return {"user_id": user_id, "auth_token": self.tokens.mint(ROLE_USER, user_id)}

    # -- tests ------------------------------------------------------------

    def submit_test(self, lab_id: str, envelope: SealedEnvelope) -> dict:
        try:
            lab = self.store.get_lab(lab_id)
        except StoreNotFound:
            raise ServiceError("UNKNOWN_LAB", lab_id) from None
        if not lab.accredited:
            raise ServiceError("NOT_ACCREDITED", lab_id)
        try:
            payload = open_envelope(envelope, lab.server_held_decryption_key)
        except crypto.DecryptFailed:
            raise ServiceError(
                "DECRYPT_FAILED", "envelope not sealed to this lab's channel key"
            ) from None
        fields = self._parse_test_payload(payload)
        try:
            user = self.store.get_user(fields["user_id"])
        except StoreNotFound:
            raise ServiceError("UNKNOWN_USER", fields["user_id"]) from None
        test_id = f"TST-{uuid.uuid4().hex[:12]}"
        self.store.put_test(
            TestRecord(
                test_id=test_id,
                user_id=user.user_id,
                lab_id=lab_id,
                test_type=fields["test_type"],
                result_payload=canonical_json(fields),
                taken_at=fields["taken_at"],
                valid_until=fields["taken_at"] + self.config.test_validity_ms,
            )
        )
        biometric = fields.get("biometric_digest")
        if biometric and user.biometric_digest is None:
            self.store.set_user_biometric(user.user_id, bytes.fromhex(biometric))
        return {"test_id": test_id}

    @staticmethod
    def _parse_test_payload(payload: bytes) -> dict:
        try:
            fields = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ServiceError("MALFORMED_PAYLOAD", "payload is not JSON") from None
        if not isinstance(fields, dict):
            raise ServiceError("MALFORMED_PAYLOAD", "payload is not an object")
        for key in ("user_id", "test_type", "result"):
            if not isinstance(fields.get(key), str) or not fields[key]:
                raise ServiceError("MALFORMED_PAYLOAD", f"missing field {key}")
        if not isinstance(fields.get("taken_at"), int):
            raise ServiceError("MALFORMED_PAYLOAD", "missing field taken_at")
        biometric = fields.get("biometric_digest")
        if biometric is not None:
            if not isinstance(biometric, str):
                raise ServiceError("MALFORMED_PAYLOAD", "biometric_digest not hex")
            try:
                if len(bytes.fromhex(biometric)) != 32:
                    raise ValueError
            except ValueError:
                raise ServiceError(
                    "MALFORMED_PAYLOAD", "biometric_digest must be 32 bytes hex"
                ) from None
        return fields

    def list_labs(self) -> list[dict]:
        return [
            {"lab_id": lab.lab_id, "name": lab.name}
            for lab in self.store.list_accredited_labs()
        ]

    def list_valid_tests(self, user_id: str) -> list[dict]:
        try:
            tests = self.store.list_valid_tests(user_id, self.clock())
        except StoreNotFound:
            raise ServiceError("UNKNOWN_USER", user_id) from None
        return [
            {
                "test_id": t.test_id,
                "test_type": t.test_type,
                "taken_at": t.taken_at,
                "valid_until": t.valid_until,
                "lab_id": t.lab_id,
            }
            for t in tests
        ]

    # -- token sale -------------------------------------------------------

    def purchase_tokens(self, user_id: str, n: int, payment_proof: str) -> dict:
        user = self._get_user(user_id)
        if not 1 <= n <= self.config.max_tokens_per_purchase:
            raise ServiceError(
                "OVER_LIMIT",
                f"purchases are limited to {self.config.max_tokens_per_purchase}",
            )
        if not self.store.list_valid_tests(user_id, self.clock()):
            raise ServiceError("NO_VALID_TEST", "a valid test is required to buy")
        if not self._payment_accepted(payment_proof, n * self.config.token_price):
            raise ServiceError("PAYMENT_REJECTED", "payment proof rejected")
        record = self._submit_controller_tx(
            [Payment(user.ledger_account, self.ledger.kyc_asset, n)]
        )
        if record.result == RESULT_SUPPLY_EXHAUSTED:
            raise ServiceError("SUPPLY_EXHAUSTED", "token supply exhausted")
        if record.result != RESULT_APPLIED:
            raise ServiceError("PAYMENT_REJECTED", f"issuance failed: {record.result}")
        return {"tx_hash": record.tx_hash.hex()}

    def _payment_accepted(self, proof: str, amount_due: int) -> bool:
        rule = self.config.payment_rule
        if rule == "accept-all":
            return True
        if rule == "reject-all":
            return False
        return proof == f"PAID:{amount_due}"

    # -- certificate transfer ----------------------------------------------

    def initiate_transfer(self, user_id: str, test_id: str, company_id: str) -> dict:
        user = self._get_user(user_id)
        try:
            test = self.store.get_test(test_id)
        except StoreNotFound:
            raise ServiceError("UNKNOWN_TEST", test_id) from None
        if test.user_id != user_id:
            raise ServiceError("NOT_OWNER", "test belongs to another user")
        if test.valid_until <= self.clock():
            raise ServiceError("EXPIRED", "test validity window has passed")
        try:
            company = self.store.get_company(company_id)
        except StoreNotFound:
            raise ServiceError("UNKNOWN_COMPANY", company_id) from None
        if self.ledger.get_balance(user.ledger_account, self.ledger.kyc_asset) < 1:
            raise ServiceError("INSUFFICIENT_TOKENS", "at least one token is needed")
        nonce = new_user_hash_nonce()
        user_hash = derive_user_hash(
            test_id, user.ledger_account.value, company.ledger_account.value, nonce
        )
        self.store.put_transfer(
            TransferRecord(
                user_hash=user_hash,
                nonce=nonce,
                test_id=test_id,
                source_account=user.ledger_account,
                destination_company_id=company_id,
                created_at=self.clock(),
            )
        )
        return {
            "user_hash": user_hash.hex(),
            "destination_account": company.ledger_account.display,
        }

    def confirm_transfer(self, user_hash: UserHash, block_hash: bytes) -> dict:
        """Verify the on-chain payment end to end, then backfill write-once."""
        try:
            transfer = self.store.get_transfer(user_hash)
        except StoreNotFound:
            raise ServiceError("NOT_FOUND", "no transfer for this hash") from None
        if transfer.block_hash is not None:
            raise ServiceError("ALREADY_BACKFILLED", "transfer already confirmed")
        try:
            record = self.ledger.get_transaction(block_hash)
        except TransactionNotFound:
            raise ServiceError("LEDGER_TX_MISSING", block_hash.hex()) from None
        if record.result != RESULT_APPLIED:
            raise ServiceError("LEDGER_TX_MISSING", f"transaction {record.result}")
        tx = record.stx.tx
        if len(tx.operations) != 1 or not isinstance(tx.operations[0], Payment):
            raise ServiceError("WRONG_ASSET", "expected a single token payment")
        payment = tx.operations[0]
        if payment.asset != self.ledger.kyc_asset:
            raise ServiceError("WRONG_ASSET", "payment is not the KYC asset")
        company = self.store.get_company(transfer.destination_company_id)
        if tx.source != transfer.source_account:
            raise ServiceError("PARTY_MISMATCH", "payment source is not the sender")
        if payment.destination != company.ledger_account:
            raise ServiceError(
                "PARTY_MISMATCH", "payment destination is not the company"
            )
        if tx.memo.kind is not MemoKind.HASH:
            raise ServiceError("MEMO_MISMATCH", "transaction carries no hash memo")
        if tx.memo.data[:16] != user_hash.value or tx.memo.data[16:] != MEMO_PAD:
            raise ServiceError("MEMO_MISMATCH", "memo does not carry this user hash")
        numeric_id = self.store.allocate_numeric_id()
        try:
            self.store.backfill_block_hash(user_hash, block_hash, numeric_id)
        except StoreAlreadyBackfilled:
            raise ServiceError("ALREADY_BACKFILLED", "transfer already confirmed") from None
        return {"numeric_id": numeric_id}

    def get_qr_payload(self, numeric_id: int, user_id: str) -> dict:
        try:
            transfer = self.store.find_transfer_by_numeric_id(numeric_id)
        except StoreNotFound:
            raise ServiceError("NOT_FOUND", f"numeric id {numeric_id}") from None
        test = self.store.get_test(transfer.test_id)
        if test.user_id != user_id:
            raise ServiceError("NOT_OWNER", "identifier belongs to another user")
        assert transfer.block_hash is not None  # numeric ids exist only backfilled
        return {"qr_text": encode_qr_payload(transfer.block_hash)}

    # -- certificate release -------------------------------------------------

    def fetch_certificate(self, company_id: str, user_hash: UserHash) -> SealedEnvelope:
        try:
            transfer = self.store.get_transfer(user_hash)
        except StoreNotFound:
            raise ServiceError("NOT_FOUND", "no transfer for this hash") from None
        if transfer.block_hash is None:
            raise ServiceError("NOT_BACKFILLED", "transfer not confirmed on ledger")
        if transfer.destination_company_id != company_id:
            raise ServiceError(
                "NOT_DESTINATION", "certificate was sent to a different company"
            )
        company = self.store.get_company(company_id)
        certificate = self._build_certificate(transfer)
        return seal(certificate.canonical_bytes(), company.encryption_public_key)

    def _build_certificate(self, transfer: TransferRecord) -> CertificateDocument:
        test = self.store.get_test(transfer.test_id)
        user = self.store.get_user(test.user_id)
        lab = self.store.get_lab(test.lab_id)
        submitted = json.loads(test.result_payload.decode("utf-8"))
        return CertificateDocument(
            test_id=test.test_id,
            user_name=user.name,
            test_type=test.test_type,
            result=submitted["result"],
            taken_at=test.taken_at,
            valid_until=test.valid_until,
            lab_name=lab.name,
        )

    # -- buy-back -------------------------------------------------------------

    def buy_back(self, company_id: str, n: int, return_tx_hash: bytes) -> dict:
        if n < 1:
            raise ServiceError("AMOUNT_MISMATCH", "n must be >= 1")
        company = self._get_company(company_id)
        try:
            record = self.ledger.get_transaction(return_tx_hash)
        except TransactionNotFound:
            raise ServiceError("LEDGER_TX_MISSING", return_tx_hash.hex()) from None
        if record.result != RESULT_APPLIED:
            raise ServiceError("LEDGER_TX_MISSING", f"transaction {record.result}")
        tx = record.stx.tx
        if len(tx.operations) != 1 or not isinstance(tx.operations[0], Payment):
            raise ServiceError("WRONG_DIRECTION", "expected a single token payment")
        payment = tx.operations[0]
        if (
            tx.source != company.ledger_account
            or payment.destination != self.ledger.controller_account
        ):
            raise ServiceError(
                "WRONG_DIRECTION", "payment must return company tokens to the issuer"
            )
        if payment.amount != n:
            raise ServiceError(
                "AMOUNT_MISMATCH", f"payment moves {payment.amount}, claim is for {n}"
            )
        credit = self.config.buyback_credit(n)
        try:
            self.store.record_buyback_claim(return_tx_hash, company_id, credit)
        except StoreAlreadyClaimed:
            raise ServiceError("ALREADY_CLAIMED", "return payment already claimed") from None
        return {"credit": credit}

    # -- small helpers ---------------------------------------------------------

    def _get_user(self, user_id: str) -> UserRecord:
        try:
            return self.store.get_user(user_id)
        except StoreNotFound:
            raise ServiceError("UNKNOWN_USER", user_id) from None

    def _get_company(self, company_id: str) -> CompanyRecord:
        try:
            return self.store.get_company(company_id)
        except StoreNotFound:
            raise ServiceError("UNKNOWN_COMPANY", company_id) from None
