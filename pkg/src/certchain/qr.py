"""The QR payload grammar shared by the server and every client.

A payload is the fixed prefix followed by the ledger transaction hash in
lowercase hex: ``KYCCERT:v1:<64 hex chars>`` (75 characters total).
"""

from __future__ import annotations

QR_PREFIX = "KYCCERT:v1:"
QR_PAYLOAD_LEN = len(QR_PREFIX) + 64


class BadPayload(ValueError):
    code = "BAD_PAYLOAD"


def encode_qr_payload(block_hash: bytes) -> str:
    if len(block_hash) != 32:
        raise ValueError("block hash must be 32 bytes")
    return QR_PREFIX + block_hash.hex()


def parse_qr_payload(text: str) -> bytes:
    text = text.strip()
    if not text.startswith(QR_PREFIX) or len(text) != QR_PAYLOAD_LEN:
        raise BadPayload(f"not a certificate payload: {text[:24]!r}...")
    try:
        block_hash = bytes.fromhex(text[len(QR_PREFIX) :])
    except ValueError as exc:
        raise BadPayload("payload hash is not hex") from exc
    if text[len(QR_PREFIX) :] != block_hash.hex():
        raise BadPayload("payload hash must be lowercase hex")
    return block_hash
