"""Bearer tokens minted at onboarding: controller-signed opaque strings.

Token shape: ``cct1.<b64url(payload)>.<b64url(signature)>`` where payload
is canonical JSON ``{"nonce": ..., "role": ..., "sub": ...}`` and the
signature is Ed25519 by the controller key over the payload bytes. Tokens
are verified statelessly.
"""

from __future__ import annotations

import base64
import json
import os

from ..crypto import SigningKeyPair, verify_signature
from ..registry.journal import canonical_json

_PREFIX = "cct1"

ROLE_USER = "user"
ROLE_LAB = "lab"
ROLE_COMPANY = "company"


def _b64e(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).decode("ascii").rstrip("=")


def _b64d(text: str) -> bytes:
    return base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))


class TokenAuthority:
    def __init__(self, keys: SigningKeyPair) -> None:
        self._keys = keys

    def mint(self, role: str, subject: str) -> str:
        payload = canonical_json(
            {"nonce": os.urandom(8).hex(), "role": role, "sub": subject}
        )
        return ".".join([_PREFIX, _b64e(payload), _b64e(self._keys.sign(payload))])

    def verify(self, token: str) -> tuple[str, str] | None:
        """Returns (role, subject) for a valid token, else None."""
        parts = token.split(".")
        if len(parts) != 3 or parts[0] != _PREFIX:
            return None
        try:
            payload = _b64d(parts[1])
            signature = _b64d(parts[2])
        except Exception:
            return None
        if not verify_signature(self._keys.public_key, payload, signature):
            return None
        try:
            obj = json.loads(payload.decode("utf-8"))
            return str(obj["role"]), str(obj["sub"])
        except Exception:
            return None
