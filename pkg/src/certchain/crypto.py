"""Key generation, signing, hashing, and hybrid envelope encryption.

Algorithm choices, fixed for the whole project:

* ``digest256`` is SHA-256, so any third-party SHA-256 implementation can
  recompute every hash this system produces.
* Ledger signing keys are Ed25519; the 32-byte raw public key doubles as the
  ledger account id.
* Payload encryption is a hybrid envelope: a fresh AES-256-GCM key encrypts
  the payload and RSA-OAEP (SHA-256, 2048-bit) wraps that key for the
  recipient. Raw RSA cannot carry multi-kilobyte documents; the envelope can.

Envelope wire format (version 1), using the codec primitives::

    0x01 || bstr(wrapped_key) || bstr(nonce) || bstr(ciphertext)
         || bstr(tag) || bstr(recipient_hint)

``recipient_hint`` is ``digest256`` of the recipient's DER-encoded public
key; it lets a holder of several keys pick the right one without trial
decryption, and carries no payload metadata.

The 16-byte user hash that travels in ledger memos is derived as::

    sha256( bstr(test_id_utf8) || bstr(source_32) || bstr(dest_32)
            || bstr(nonce_16) )[0:16]

with the nonce stored off-chain next to the transfer row so the derivation
can be re-run and audited later.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .codec import CodecError, Reader, bstr

MAX_PAYLOAD_BYTES = 1024 * 1024
USER_HASH_LEN = 16
ENVELOPE_VERSION = 1

_RSA_KEY_BITS = 2048
_AES_KEY_BYTES = 32
_GCM_NONCE_BYTES = 12
_GCM_TAG_BYTES = 16


class CryptoError(Exception):
    """Base class for crypto failures."""


class DecryptFailed(CryptoError):
    """Envelope could not be opened: wrong key or tampered content.

    The two causes are deliberately indistinguishable to the caller.
    """


class SignatureInvalid(CryptoError):
    pass


def digest256(data: bytes) -> bytes:
    """SHA-256 of ``data``. The one fixed digest used everywhere."""
    return hashlib.sha256(data).digest()


# ---------------------------------------------------------------------------
# Signing (Ed25519)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SigningKeyPair:
    """Ed25519 pair; ``public_key`` is the 32-byte raw verification key."""

    public_key: bytes
    secret_seed: bytes

    def sign(self, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(self.secret_seed).sign(message)


def gen_signing_keypair() -> SigningKeyPair:
    priv = Ed25519PrivateKey.generate()
    seed = priv.private_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PrivateFormat.Raw,
        encryption_algorithm=serialization.NoEncryption(),
    )
    pub = priv.public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )
    return SigningKeyPair(public_key=pub, secret_seed=seed)


def signing_keypair_from_seed(seed: bytes) -> SigningKeyPair:
    priv = Ed25519PrivateKey.from_private_bytes(seed)
    pub = priv.public_key().public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )
    return SigningKeyPair(public_key=pub, secret_seed=seed)


def verify_signature(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


# ---------------------------------------------------------------------------
# Hybrid envelope encryption (RSA-OAEP key wrap + AES-256-GCM payload)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncryptionKeyPair:
    """RSA pair as DER bytes: SubjectPublicKeyInfo public, PKCS8 private."""

    public_key: bytes
    private_key: bytes


def gen_encryption_keypair() -> EncryptionKeyPair:
    priv = rsa.generate_private_key(public_exponent=65537, key_size=_RSA_KEY_BITS)
    priv_der = priv.private_bytes(
        encoding=serialization.Encoding.DER,
        format=serialization.PrivateFormat.PKCS8,
        encryption_algorithm=serialization.NoEncryption(),
    )
    pub_der = priv.public_key().public_bytes(
        encoding=serialization.Encoding.DER,
        format=serialization.PublicFormat.SubjectPublicKeyInfo,
    )
    return EncryptionKeyPair(public_key=pub_der, private_key=priv_der)


_OAEP = padding.OAEP(
    mgf=padding.MGF1(algorithm=hashes.SHA256()),
    algorithm=hashes.SHA256(),
    label=None,
)


# DER parsing dominates envelope cost (tens of ms per parse), and each party
# only ever handles a handful of keys, so parsed key objects are memoized.
@lru_cache(maxsize=64)
def _load_public(der: bytes) -> rsa.RSAPublicKey:
    pub = serialization.load_der_public_key(der)
    if not isinstance(pub, rsa.RSAPublicKey):
        raise CryptoError("not an RSA public key")
    return pub


@lru_cache(maxsize=64)
def _load_private(der: bytes) -> rsa.RSAPrivateKey:
    priv = serialization.load_der_private_key(der, password=None)
    if not isinstance(priv, rsa.RSAPrivateKey):
        raise CryptoError("not an RSA private key")
    return priv


@dataclass(frozen=True)
class SealedEnvelope:
    wrapped_key: bytes
    nonce: bytes
    ciphertext: bytes
    tag: bytes
    recipient_hint: bytes

    def to_bytes(self) -> bytes:
        return (
            bytes([ENVELOPE_VERSION])
            + bstr(self.wrapped_key)
            + bstr(self.nonce)
            + bstr(self.ciphertext)
            + bstr(self.tag)
            + bstr(self.recipient_hint)
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedEnvelope":
        r = Reader(data)
        version = r.take(1)[0]
        if version != ENVELOPE_VERSION:
            raise CodecError(f"unsupported envelope version {version}")
        env = cls(
            wrapped_key=r.bstr(),
            nonce=r.bstr(),
            ciphertext=r.bstr(),
            tag=r.bstr(),
            recipient_hint=r.bstr(),
        )
        r.expect_end()
        return env


def recipient_hint(public_key_der: bytes) -> bytes:
    return digest256(public_key_der)


def seal(payload: bytes, recipient_public_key: bytes) -> SealedEnvelope:
    """Encrypt ``payload`` so only the holder of the matching private key can read it."""
    if len(payload) > MAX_PAYLOAD_BYTES:
        raise CryptoError(f"payload exceeds {MAX_PAYLOAD_BYTES} bytes")
    pub = _load_public(recipient_public_key)
    session_key = os.urandom(_AES_KEY_BYTES)
    nonce = os.urandom(_GCM_NONCE_BYTES)
    sealed = AESGCM(session_key).encrypt(nonce, payload, None)
    return SealedEnvelope(
        wrapped_key=pub.encrypt(session_key, _OAEP),
        nonce=nonce,
        ciphertext=sealed[:-_GCM_TAG_BYTES],
        tag=sealed[-_GCM_TAG_BYTES:],
        recipient_hint=recipient_hint(recipient_public_key),
    )


def open_envelope(env: SealedEnvelope, recipient_private_key: bytes) -> bytes:
    """Decrypt and authenticate; raises :class:`DecryptFailed` on any mismatch."""
    try:
        priv = _load_private(recipient_private_key)
        session_key = priv.decrypt(env.wrapped_key, _OAEP)
        return AESGCM(session_key).decrypt(
            env.nonce, env.ciphertext + env.tag, None
        )
    except DecryptFailed:
        raise
    except Exception as exc:  # wrong key and tampering must look identical
        raise DecryptFailed("envelope could not be opened") from exc


# ---------------------------------------------------------------------------
# 16-byte user hash
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UserHash:
    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != USER_HASH_LEN:
            raise ValueError(f"user hash must be {USER_HASH_LEN} bytes")

    def hex(self) -> str:
        return self.value.hex()


def derive_user_hash(
    test_id: str, source: bytes, destination: bytes, nonce: bytes
) -> UserHash:
    """Prefix-truncated digest binding a test to its send parties.

    ``nonce`` must be 16 fresh random bytes and is persisted with the
    transfer row so the server can later re-verify provenance.
    """
    if not test_id:
        raise ValueError("test_id must be non-empty")
    if len(nonce) != 16:
        raise ValueError("nonce must be 16 bytes")
    preimage = (
        bstr(test_id.encode("utf-8"))
        + bstr(source)
        + bstr(destination)
        + bstr(nonce)
    )
    return UserHash(digest256(preimage)[:USER_HASH_LEN])


def new_user_hash_nonce() -> bytes:
    return os.urandom(16)
