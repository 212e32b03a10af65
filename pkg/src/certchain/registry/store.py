"""Durable registry of users, labs, companies, tests, and transfers.

All mutations are validated, appended to the journal, and only then applied
in memory, under one lock (one writer). Reads serve from memory. A snapshot
is written every ``snapshot_every`` mutations so reopening a long-lived
store does not replay the whole journal; the journal alone is always
sufficient to rebuild.

Backfilling a transfer (attaching the ledger transaction hash plus the
freshly assigned numeric id) is write-once: a second attempt fails
regardless of interleaving, which is what keeps one certificate send bound
to exactly one ledger payment.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from ..crypto import UserHash, digest256
from .journal import Journal, canonical_json
from .records import CompanyRecord, LabRecord, TestRecord, TransferRecord, UserRecord

FIRST_NUMERIC_ID = 1_000_000_000
DEFAULT_SNAPSHOT_EVERY = 500

_SNAPSHOT_VERSION = 1


class RegistryError(Exception):
    code = "REGISTRY_ERROR"


class DuplicateKey(RegistryError):
    code = "DUPLICATE_KEY"


class NotFound(RegistryError):
    code = "NOT_FOUND"


class AlreadyBackfilled(RegistryError):
    code = "ALREADY_BACKFILLED"


class UnknownUser(RegistryError):
    code = "UNKNOWN_USER"


class AlreadyClaimed(RegistryError):
    code = "ALREADY_CLAIMED"


class InvalidRecord(RegistryError):
    code = "INVALID_RECORD"


class RegistryStore:
    def __init__(self, journal: Journal, snapshot_path: Path | None,
                 snapshot_every: int = DEFAULT_SNAPSHOT_EVERY) -> None:
        self._journal = journal
        self._snapshot_path = snapshot_path
        self._snapshot_every = snapshot_every
        self._lock = threading.RLock()
        self._entries_applied = 0
        self._users: dict[str, UserRecord] = {}
        self._labs: dict[str, LabRecord] = {}
        self._companies: dict[str, CompanyRecord] = {}
        self._tests: dict[str, TestRecord] = {}
        self._transfers: dict[bytes, TransferRecord] = {}
        self._numeric_index: dict[int, bytes] = {}
        self._claimed_buybacks: set[bytes] = set()
        self._next_numeric_id = FIRST_NUMERIC_ID

    # -- lifecycle ------------------------------------------------------

    @classmethod
    def open(cls, data_dir: Path, snapshot_every: int = DEFAULT_SNAPSHOT_EVERY) -> "RegistryStore":
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        journal_path = data_dir / "registry.journal"
        snapshot_path = data_dir / "registry.snapshot"
        if journal_path.exists():
            journal, entries = Journal.open(journal_path)
        else:
            journal, entries = Journal.create(journal_path), []
        store = cls(journal, snapshot_path, snapshot_every)
        skip = store._restore_snapshot()
        for entry in entries[skip:]:
            store._apply(entry)
            store._entries_applied += 1
        return store

    def close(self) -> None:
        self._journal.close()

    def _restore_snapshot(self) -> int:
        """Load state from the snapshot if it is intact; returns entries to skip."""
        path = self._snapshot_path
        if path is None or not path.exists():
            return 0
        raw = path.read_bytes()
        if len(raw) < 36:
            return 0
        length = int.from_bytes(raw[:4], "big")
        payload, checksum = raw[4 : 4 + length], raw[4 + length : 4 + length + 32]
        if len(payload) != length or digest256(payload) != checksum:
            return 0  # stale or torn snapshot: fall back to full replay
        snap = json.loads(payload.decode("utf-8"))
        if snap.get("version") != _SNAPSHOT_VERSION:
            return 0
        state = snap["state"]
        self._users = {k: UserRecord.from_json(v) for k, v in state["users"].items()}
        self._labs = {k: LabRecord.from_json(v) for k, v in state["labs"].items()}
        self._companies = {
            k: CompanyRecord.from_json(v) for k, v in state["companies"].items()
        }
        self._tests = {k: TestRecord.from_json(v) for k, v in state["tests"].items()}
        self._transfers = {
            bytes.fromhex(k): TransferRecord.from_json(v)
            for k, v in state["transfers"].items()
        }
        self._numeric_index = {
            t.numeric_id: h for h, t in self._transfers.items() if t.numeric_id
        }
        self._claimed_buybacks = {bytes.fromhex(h) for h in state["claimed_buybacks"]}
        self._next_numeric_id = state["next_numeric_id"]
        self._entries_applied = snap["entries_applied"]
        return snap["entries_applied"]

    def snapshot(self) -> None:
        with self._lock:
            state = {
                "users": {k: v.to_json() for k, v in self._users.items()},
                "labs": {k: v.to_json() for k, v in self._labs.items()},
                "companies": {k: v.to_json() for k, v in self._companies.items()},
                "tests": {k: v.to_json() for k, v in self._tests.items()},
                "transfers": {
                    k.hex(): v.to_json() for k, v in self._transfers.items()
                },
                "claimed_buybacks": sorted(h.hex() for h in self._claimed_buybacks),
                "next_numeric_id": self._next_numeric_id,
            }
            payload = canonical_json(
                {
                    "version": _SNAPSHOT_VERSION,
                    "entries_applied": self._entries_applied,
                    "state": state,
                }
            )
            if self._snapshot_path is None:
                return
            tmp = self._snapshot_path.with_suffix(".snapshot.tmp")
            tmp.write_bytes(
                len(payload).to_bytes(4, "big") + payload + digest256(payload)
            )
            tmp.replace(self._snapshot_path)

    def _commit(self, entry: dict) -> None:
        self._journal.append(entry)
        self._apply(entry)
        self._entries_applied += 1
        if self._entries_applied % self._snapshot_every == 0:
            self.snapshot()

    # -- journal replay ---------------------------------------------------

    def _apply(self, entry: dict) -> None:
        op, data = entry["op"], entry["data"]
        if op == "put_user":
            record = UserRecord.from_json(data)
            self._users[record.user_id] = record
        elif op == "put_lab":
            record = LabRecord.from_json(data)
            self._labs[record.lab_id] = record
        elif op == "put_company":
            record = CompanyRecord.from_json(data)
            self._companies[record.company_id] = record
        elif op == "put_test":
            record = TestRecord.from_json(data)
            self._tests[record.test_id] = record
        elif op == "put_transfer":
            record = TransferRecord.from_json(data)
            self._transfers[record.user_hash.value] = record
        elif op == "set_user_biometric":
            user = self._users[data["user_id"]]
            self._users[data["user_id"]] = UserRecord(
                user_id=user.user_id,
                name=user.name,
                national_id_digest=user.national_id_digest,
                ledger_account=user.ledger_account,
                created_at=user.created_at,
                biometric_digest=bytes.fromhex(data["biometric_digest"]),
            )
        elif op == "backfill":
            key = bytes.fromhex(data["user_hash"])
            transfer = self._transfers[key]
            updated = TransferRecord(
                user_hash=transfer.user_hash,
                nonce=transfer.nonce,
                test_id=transfer.test_id,
                source_account=transfer.source_account,
                destination_company_id=transfer.destination_company_id,
                created_at=transfer.created_at,
                block_hash=bytes.fromhex(data["block_hash"]),
                numeric_id=data["numeric_id"],
            )
            self._transfers[key] = updated
            self._numeric_index[data["numeric_id"]] = key
            self._next_numeric_id = max(self._next_numeric_id, data["numeric_id"] + 1)
        elif op == "buyback_claim":
            tx_hash = bytes.fromhex(data["return_tx_hash"])
            self._claimed_buybacks.add(tx_hash)
            company = self._companies[data["company_id"]]
            self._companies[data["company_id"]] = CompanyRecord(
                company_id=company.company_id,
                name=company.name,
                encryption_public_key=company.encryption_public_key,
                ledger_account=company.ledger_account,
                credit_balance=company.credit_balance + data["credit"],
            )
        else:
            raise RegistryError(f"unknown journal op {op!r}")

    # -- puts and gets ------------------------------------------------

    def put_user(self, record: UserRecord) -> None:
        with self._lock:
            if record.user_id in self._users:
                raise DuplicateKey(f"user {record.user_id}")
            if any(
                u.ledger_account == record.ledger_account for u in self._users.values()
            ):
                raise DuplicateKey(f"ledger account {record.ledger_account.display}")
            self._commit({"op": "put_user", "data": record.to_json()})

    def get_user(self, user_id: str) -> UserRecord:
        with self._lock:
            record = self._users.get(user_id)
        if record is None:
            raise NotFound(f"user {user_id}")
        return record

    def put_lab(self, record: LabRecord) -> None:
        with self._lock:
            if record.lab_id in self._labs:
                raise DuplicateKey(f"lab {record.lab_id}")
            self._commit({"op": "put_lab", "data": record.to_json()})

    def get_lab(self, lab_id: str) -> LabRecord:
        with self._lock:
            record = self._labs.get(lab_id)
        if record is None:
            raise NotFound(f"lab {lab_id}")
        return record

    def put_company(self, record: CompanyRecord) -> None:
        with self._lock:
            if record.company_id in self._companies:
                raise DuplicateKey(f"company {record.company_id}")
            if any(
                c.ledger_account == record.ledger_account
                for c in self._companies.values()
            ):
                raise DuplicateKey(f"ledger account {record.ledger_account.display}")
            if record.credit_balance < 0:
                raise InvalidRecord("credit balance must be >= 0")
            self._commit({"op": "put_company", "data": record.to_json()})

    def get_company(self, company_id: str) -> CompanyRecord:
        with self._lock:
            record = self._companies.get(company_id)
        if record is None:
            raise NotFound(f"company {company_id}")
        return record

    def put_test(self, record: TestRecord) -> None:
        with self._lock:
            if record.test_id in self._tests:
                raise DuplicateKey(f"test {record.test_id}")
            if record.valid_until <= record.taken_at:
                raise InvalidRecord("valid_until must be after taken_at")
            if record.user_id not in self._users:
                raise UnknownUser(record.user_id)
            self._commit({"op": "put_test", "data": record.to_json()})

    def get_test(self, test_id: str) -> TestRecord:
        with self._lock:
            record = self._tests.get(test_id)
        if record is None:
            raise NotFound(f"test {test_id}")
        return record

    def put_transfer(self, record: TransferRecord) -> None:
        with self._lock:
            if record.user_hash.value in self._transfers:
                raise DuplicateKey(f"transfer {record.user_hash.hex()}")
            if record.block_hash is not None or record.numeric_id is not None:
                raise InvalidRecord("transfers are inserted before backfill")
            self._commit({"op": "put_transfer", "data": record.to_json()})

    def get_transfer(self, user_hash: UserHash) -> TransferRecord:
        with self._lock:
            record = self._transfers.get(user_hash.value)
        if record is None:
            raise NotFound(f"transfer {user_hash.hex()}")
        return record

    # -- lookups ------------------------------------------------------

    def find_transfer_by_user_hash(self, user_hash: UserHash) -> TransferRecord:
        return self.get_transfer(user_hash)

    def find_transfer_by_numeric_id(self, numeric_id: int) -> TransferRecord:
        with self._lock:
            key = self._numeric_index.get(numeric_id)
            if key is None:
                raise NotFound(f"numeric id {numeric_id}")
            return self._transfers[key]

    def list_accredited_labs(self) -> list[LabRecord]:
        with self._lock:
            labs = [lab for lab in self._labs.values() if lab.accredited]
        return sorted(labs, key=lambda lab: lab.lab_id)

    def list_valid_tests(self, user_id: str, now_ms: int) -> list[TestRecord]:
        with self._lock:
            if user_id not in self._users:
                raise UnknownUser(user_id)
            tests = [
                t
                for t in self._tests.values()
                if t.user_id == user_id and t.valid_until > now_ms
            ]
        return sorted(tests, key=lambda t: t.test_id)

    # -- targeted mutations ---------------------------------------------

    def set_user_biometric(self, user_id: str, digest: bytes) -> None:
        with self._lock:
            user = self._users.get(user_id)
            if user is None:
                raise UnknownUser(user_id)
            if user.biometric_digest is not None:
                raise InvalidRecord("biometric digest is write-once")
            self._commit(
                {
                    "op": "set_user_biometric",
                    "data": {"user_id": user_id, "biometric_digest": digest.hex()},
                }
            )

    def allocate_numeric_id(self) -> int:
        """Hand out the next numeric id; gaps from failed backfills are fine."""
        with self._lock:
            numeric_id = self._next_numeric_id
            self._next_numeric_id += 1
            return numeric_id

    def backfill_block_hash(
        self, user_hash: UserHash, block_hash: bytes, numeric_id: int
    ) -> None:
        with self._lock:
            transfer = self._transfers.get(user_hash.value)
            if transfer is None:
                raise NotFound(f"transfer {user_hash.hex()}")
            if transfer.block_hash is not None:
                raise AlreadyBackfilled(user_hash.hex())
            if numeric_id in self._numeric_index:
                raise DuplicateKey(f"numeric id {numeric_id}")
            self._commit(
                {
                    "op": "backfill",
                    "data": {
                        "user_hash": user_hash.hex(),
                        "block_hash": block_hash.hex(),
                        "numeric_id": numeric_id,
                    },
                }
            )

    def record_buyback_claim(
        self, return_tx_hash: bytes, company_id: str, credit: int
    ) -> int:
        """Atomically mark a return payment claimed and credit the company."""
        with self._lock:
            if return_tx_hash in self._claimed_buybacks:
                raise AlreadyClaimed(return_tx_hash.hex())
            if company_id not in self._companies:
                raise NotFound(f"company {company_id}")
            self._commit(
                {
                    "op": "buyback_claim",
                    "data": {
                        "return_tx_hash": return_tx_hash.hex(),
                        "company_id": company_id,
                        "credit": credit,
                    },
                }
            )
            return self._companies[company_id].credit_balance
