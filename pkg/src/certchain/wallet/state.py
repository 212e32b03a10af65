"""Wallet file: keys, registration, cached transfers, pending-send state.

A versioned JSON document carrying a digest checksum over its canonical
form; a wallet that fails the checksum is refused rather than partially
trusted. The signing seed never leaves this file. While a command mutates
the wallet, an exclusive lock is held on a sidecar ``.lock`` file.
"""

from __future__ import annotations

import fcntl
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from ..crypto import SigningKeyPair, digest256, gen_signing_keypair, signing_keypair_from_seed
from ..ledger import AccountId
from ..registry.journal import canonical_json

WALLET_VERSION = 1


class WalletError(Exception):
    code = "WALLET_ERROR"


@dataclass
class WalletState:
    signing_seed: bytes
    user_id: str | None = None
    auth_token: str | None = None
    transfers: dict = field(default_factory=dict)  # numeric_id(str) -> details
    pending_send: dict | None = None

    @property
    def keys(self) -> SigningKeyPair:
        return signing_keypair_from_seed(self.signing_seed)

    @property
    def account(self) -> AccountId:
        return AccountId(self.keys.public_key)

    def to_json(self) -> dict:
        return {
            "version": WALLET_VERSION,
            "signing_seed": self.signing_seed.hex(),
            "user_id": self.user_id,
            "auth_token": self.auth_token,
            "transfers": self.transfers,
            "pending_send": self.pending_send,
        }

    @classmethod
    def fresh(cls) -> "WalletState":
        return cls(signing_seed=gen_signing_keypair().secret_seed)


def _checksum(doc: dict) -> str:
    return digest256(canonical_json(doc)).hex()


def load_wallet(path: Path) -> WalletState:
    path = Path(path)
    if not path.exists():
        raise WalletError(f"no wallet at {path}; run `register` first")
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise WalletError(f"unreadable wallet file: {exc}") from exc
    stored = doc.pop("checksum", None)
    if stored != _checksum(doc):
        raise WalletError("wallet file failed its integrity check")
    if doc.get("version") != WALLET_VERSION:
        raise WalletError(f"unsupported wallet version {doc.get('version')}")
    return WalletState(
        signing_seed=bytes.fromhex(doc["signing_seed"]),
        user_id=doc.get("user_id"),
        auth_token=doc.get("auth_token"),
        transfers=doc.get("transfers") or {},
        pending_send=doc.get("pending_send"),
    )


def save_wallet(path: Path, state: WalletState) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = state.to_json()
    doc["checksum"] = _checksum(state.to_json())
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n")
    os.replace(tmp, path)


@contextmanager
def wallet_lock(path: Path):
    lock_path = Path(str(path) + ".lock")
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    with open(lock_path, "w") as fh:
        try:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            raise WalletError("wallet is in use by another command") from None
        try:
            yield
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)
