"""Ciphertext containers exchanged between the trusted engine and the store.

These types carry no key material. The cell wire encoding is:

    scheme_id (1 byte) || u8 len + table id (ascii) || u8 len + column id (ascii)
    || u32 big-endian payload length || payload bytes

Table and column ids on the wire are pseudonymous tokens; real names never
leave the trusted engine.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Tuple

SCHEME_DETERMINISTIC = 1
SCHEME_ORDER_PRESERVING = 2
SCHEME_OPAQUE = 3

SCHEME_NAMES = {
    SCHEME_DETERMINISTIC: "deterministic",
    SCHEME_ORDER_PRESERVING: "order_preserving",
    SCHEME_OPAQUE: "opaque",
}
SCHEME_IDS = {name: num for num, name in SCHEME_NAMES.items()}


@dataclass(frozen=True)
class Ciphertext:
    scheme_id: int
    table_id: str
    column_id: str
    payload: bytes

    def to_wire(self) -> bytes:
        t = self.table_id.encode("ascii")
        c = self.column_id.encode("ascii")
        return (
            struct.pack("!BB", self.scheme_id, len(t))
            + t
            + struct.pack("!B", len(c))
            + c
            + struct.pack("!I", len(self.payload))
            + self.payload
        )

    @classmethod
    def from_wire(cls, buf: bytes, offset: int = 0) -> Tuple["Ciphertext", int]:
        scheme_id, tlen = struct.unpack_from("!BB", buf, offset)
        offset += 2
        table_id = buf[offset : offset + tlen].decode("ascii")
        offset += tlen
        (clen,) = struct.unpack_from("!B", buf, offset)
        offset += 1
        column_id = buf[offset : offset + clen].decode("ascii")
        offset += clen
        (plen,) = struct.unpack_from("!I", buf, offset)
        offset += 4
        payload = bytes(buf[offset : offset + plen])
        if len(payload) != plen:
            raise ValueError("truncated ciphertext")
        offset += plen
        return cls(scheme_id, table_id, column_id, payload), offset


@dataclass(frozen=True)
class EncryptedRow:
    row_handle: int
    cells: Tuple[Ciphertext, ...]

    def cell(self, column_id: str) -> Ciphertext | None:
        for ct in self.cells:
            if ct.column_id == column_id:
                return ct
        return None


@dataclass(frozen=True)
class EncryptedObject:
    object_handle: str
    class_tag: Ciphertext
    payload: Ciphertext
