"""Canonical binary encoding shared by the ledger, crypto envelopes, and journals.

Every persisted or hashed structure in this project is serialized with the
same three primitives so that any two implementations agree byte for byte:

* unsigned integers are big-endian fixed width (``u16`` / ``u32`` / ``u64``),
* variable-length byte strings are length-prefixed with a ``u32`` (``bstr``),
* fields appear in a fixed declared order with no padding or framing.

Decoding is strict: a reader must consume exactly the bytes it expects and
callers are expected to call :meth:`Reader.expect_end` once a structure is
fully parsed, so trailing garbage is always an error.
"""

from __future__ import annotations

import struct

U16_MAX = 0xFFFF
U32_MAX = 0xFFFF_FFFF
U64_MAX = 0xFFFF_FFFF_FFFF_FFFF


class CodecError(ValueError):
    """Raised when encoded bytes are malformed or truncated."""


def u16(value: int) -> bytes:
    if not 0 <= value <= U16_MAX:
        raise CodecError(f"u16 out of range: {value}")
    return struct.pack(">H", value)


def u32(value: int) -> bytes:
    if not 0 <= value <= U32_MAX:
        raise CodecError(f"u32 out of range: {value}")
    return struct.pack(">I", value)


def u64(value: int) -> bytes:
    if not 0 <= value <= U64_MAX:
        raise CodecError(f"u64 out of range: {value}")
    return struct.pack(">Q", value)


def bstr(value: bytes) -> bytes:
    """Length-prefixed byte string: u32 length followed by the raw bytes."""
    if len(value) > U32_MAX:
        raise CodecError("byte string too long")
    return u32(len(value)) + value


class Reader:
    """Strict sequential reader over a bytes buffer."""

    def __init__(self, data: bytes, offset: int = 0) -> None:
        self._data = data
        self._pos = offset

    @property
    def position(self) -> int:
        return self._pos

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.remaining() < n:
            raise CodecError(
                f"truncated input: wanted {n} bytes, have {self.remaining()}"
            )
        chunk = self._data[self._pos : self._pos + n]
        self._pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def bstr(self) -> bytes:
        return self.take(self.u32())

    def expect_end(self) -> None:
        if self.remaining() != 0:
            raise CodecError(f"{self.remaining()} unconsumed trailing bytes")
