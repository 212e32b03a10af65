"""Checksummed append-only journal backing the registry.

File layout::

    header := magic(5)="CCJRN" || u16(version=1)
    entry  := u32(len(payload)) || payload || sha256(payload)

Payloads are canonical JSON (sorted keys, compact separators, UTF-8).
Appends are flushed and fsynced before being acknowledged.

Recovery follows write-ahead-log convention: on load, entries are replayed
in order until the first incomplete or checksum-failing entry, which is
treated as a torn tail from an interrupted write; everything before it is
kept, everything from it on is discarded.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..codec import u16, u32
from ..crypto import digest256

MAGIC = b"CCJRN"
VERSION = 1
_HEADER_LEN = len(MAGIC) + 2
_CHECKSUM_LEN = 32


class JournalError(Exception):
    pass


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


class Journal:
    def __init__(self, path: Path) -> None:
        self.path = Path(path)
        self._fh = None

    def _open_for_append(self):
        if self._fh is None:
            self._fh = open(self.path, "ab")
        return self._fh

    @classmethod
    def create(cls, path: Path) -> "Journal":
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "xb") as fh:
            fh.write(MAGIC + u16(VERSION))
            fh.flush()
            os.fsync(fh.fileno())
        return cls(path)

    @classmethod
    def open(cls, path: Path) -> tuple["Journal", list[dict]]:
        """Open an existing journal, returning the replayable entries."""
        path = Path(path)
        data = path.read_bytes()
        if len(data) < _HEADER_LEN or data[:5] != MAGIC:
            raise JournalError(f"not a registry journal: {path}")
        version = int.from_bytes(data[5:7], "big")
        if version != VERSION:
            raise JournalError(f"unsupported journal version {version}")
        entries: list[dict] = []
        pos = _HEADER_LEN
        valid_end = pos
        while pos + 4 <= len(data):
            length = int.from_bytes(data[pos : pos + 4], "big")
            end = pos + 4 + length + _CHECKSUM_LEN
            if end > len(data):
                break  # torn tail
            payload = data[pos + 4 : pos + 4 + length]
            checksum = data[pos + 4 + length : end]
            if digest256(payload) != checksum:
                break  # torn or corrupt tail; stop replay here
            entries.append(json.loads(payload.decode("utf-8")))
            pos = end
            valid_end = end
        if valid_end < len(data):
            # Drop the torn tail so future appends start from a clean point.
            with open(path, "r+b") as fh:
                fh.truncate(valid_end)
        return cls(path), entries

    def append(self, obj: dict) -> None:
        payload = canonical_json(obj)
        fh = self._open_for_append()
        fh.write(u32(len(payload)) + payload + digest256(payload))
        fh.flush()
        os.fsync(fh.fileno())

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def entry_count_bytes(self) -> int:
        return self.path.stat().st_size
