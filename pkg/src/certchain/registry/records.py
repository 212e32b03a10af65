"""Record types held in the off-chain registry.

Every record serializes to plain JSON (bytes as lowercase hex) so the same
encoding serves the journal, snapshots, and API responses.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..crypto import UserHash
from ..ledger import AccountId


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    name: str
    national_id_digest: bytes
    ledger_account: AccountId
    created_at: int
    biometric_digest: bytes | None = None

    def to_json(self) -> dict:
        return {
            "user_id": self.user_id,
            "name": self.name,
            "national_id_digest": self.national_id_digest.hex(),
            "ledger_account": self.ledger_account.display,
            "created_at": self.created_at,
            "biometric_digest": (
                self.biometric_digest.hex() if self.biometric_digest else None
            ),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "UserRecord":
        return cls(
            user_id=obj["user_id"],
            name=obj["name"],
            national_id_digest=bytes.fromhex(obj["national_id_digest"]),
            ledger_account=AccountId.parse(obj["ledger_account"]),
            created_at=obj["created_at"],
            biometric_digest=(
                bytes.fromhex(obj["biometric_digest"])
                if obj.get("biometric_digest")
                else None
            ),
        )


@dataclass(frozen=True)
class LabRecord:
    lab_id: str
    name: str
    server_held_decryption_key: bytes
    accredited: bool

    def to_json(self) -> dict:
        return {
            "lab_id": self.lab_id,
            "name": self.name,
            "server_held_decryption_key": self.server_held_decryption_key.hex(),
            "accredited": self.accredited,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LabRecord":
        return cls(
            lab_id=obj["lab_id"],
            name=obj["name"],
            server_held_decryption_key=bytes.fromhex(obj["server_held_decryption_key"]),
            accredited=obj["accredited"],
        )


@dataclass(frozen=True)
class CompanyRecord:
    company_id: str
    name: str
    encryption_public_key: bytes
    ledger_account: AccountId
    credit_balance: int = 0

    def to_json(self) -> dict:
        return {
            "company_id": self.company_id,
            "name": self.name,
            "encryption_public_key": self.encryption_public_key.hex(),
            "ledger_account": self.ledger_account.display,
            "credit_balance": self.credit_balance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CompanyRecord":
        return cls(
            company_id=obj["company_id"],
            name=obj["name"],
            encryption_public_key=bytes.fromhex(obj["encryption_public_key"]),
            ledger_account=AccountId.parse(obj["ledger_account"]),
            credit_balance=obj["credit_balance"],
        )


@dataclass(frozen=True)
class TestRecord:
    test_id: str
    user_id: str
    lab_id: str
    test_type: str
    result_payload: bytes
    taken_at: int
    valid_until: int

    def to_json(self) -> dict:
        return {
            "test_id": self.test_id,
            "user_id": self.user_id,
            "lab_id": self.lab_id,
            "test_type": self.test_type,
            "result_payload": self.result_payload.hex(),
            "taken_at": self.taken_at,
            "valid_until": self.valid_until,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TestRecord":
        return cls(
            test_id=obj["test_id"],
            user_id=obj["user_id"],
            lab_id=obj["lab_id"],
            test_type=obj["test_type"],
            result_payload=bytes.fromhex(obj["result_payload"]),
            taken_at=obj["taken_at"],
            valid_until=obj["valid_until"],
        )


@dataclass(frozen=True)
class TransferRecord:
    user_hash: UserHash
    nonce: bytes
    test_id: str
    source_account: AccountId
    destination_company_id: str
    created_at: int
    block_hash: bytes | None = None
    numeric_id: int | None = None

    def to_json(self) -> dict:
        return {
            "user_hash": self.user_hash.hex(),
            "nonce": self.nonce.hex(),
            "test_id": self.test_id,
            "source_account": self.source_account.display,
            "destination_company_id": self.destination_company_id,
            "created_at": self.created_at,
            "block_hash": self.block_hash.hex() if self.block_hash else None,
            "numeric_id": self.numeric_id,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TransferRecord":
        return cls(
            user_hash=UserHash(bytes.fromhex(obj["user_hash"])),
            nonce=bytes.fromhex(obj["nonce"]),
            test_id=obj["test_id"],
            source_account=AccountId.parse(obj["source_account"]),
            destination_company_id=obj["destination_company_id"],
            created_at=obj["created_at"],
            block_hash=(
                bytes.fromhex(obj["block_hash"]) if obj.get("block_hash") else None
            ),
            numeric_id=obj.get("numeric_id"),
        )
