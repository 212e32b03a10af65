"""Append-only on-disk block log.

Layout::

    header  := magic(5)="CCLOG" || u16(version=1) || bstr(network_id)
               || controller_pub(32) || u64(kyc_supply)
    entry   := bstr( block_body || block_digest )

Entries are flushed and fsynced on append. Loading is strict: a torn or
mutated file raises :class:`ChainCorrupt` instead of silently dropping
blocks, because the chain is the system's source of truth.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from ..codec import CodecError, Reader, bstr, u16, u64
from .model import LedgerBlock

MAGIC = b"CCLOG"
VERSION = 1


class ChainCorrupt(Exception):
    """The persisted block log failed to parse or verify."""


@dataclass(frozen=True)
class ChainHeader:
    network_id: str
    controller_pub: bytes
    kyc_supply: int

    def to_bytes(self) -> bytes:
        return (
            MAGIC
            + u16(VERSION)
            + bstr(self.network_id.encode("utf-8"))
            + self.controller_pub
            + u64(self.kyc_supply)
        )


class BlockLog:
    """Single-writer append-only log of canonical blocks."""

    def __init__(self, path: Path, header: ChainHeader) -> None:
        self.path = Path(path)
        self.header = header

    @classmethod
    def create(cls, path: Path, header: ChainHeader) -> "BlockLog":
        path = Path(path)
        if path.exists():
            raise FileExistsError(f"block log already exists: {path}")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(header.to_bytes())
            fh.flush()
            os.fsync(fh.fileno())
        return cls(path, header)

    @classmethod
    def load(cls, path: Path) -> tuple["BlockLog", list[LedgerBlock]]:
        path = Path(path)
        data = path.read_bytes()
        try:
            r = Reader(data)
            if r.take(5) != MAGIC:
                raise ChainCorrupt("bad magic")
            version = r.u16()
            if version != VERSION:
                raise ChainCorrupt(f"unsupported log version {version}")
            network_id = r.bstr().decode("utf-8")
            controller_pub = r.take(32)
            kyc_supply = r.u64()
            header = ChainHeader(network_id, controller_pub, kyc_supply)
            blocks: list[LedgerBlock] = []
            while r.remaining():
                blocks.append(LedgerBlock.from_bytes(r.bstr()))
        except CodecError as exc:
            raise ChainCorrupt(f"unparseable block log: {exc}") from exc
        return cls(path, header), blocks

    def append(self, block: LedgerBlock) -> None:
        with open(self.path, "ab") as fh:
            fh.write(bstr(block.to_bytes()))
            fh.flush()
            os.fsync(fh.fileno())
