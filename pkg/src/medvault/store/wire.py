"""Binary wire protocol between the trusted engine and the storage service.

Framing: every message is a 4-byte big-endian length followed by that many
payload bytes. Request payloads start with a 1-byte message kind; response
payloads start with a 1-byte status (0 ok, 1 error). Strings are u16
length-prefixed UTF-8; raw byte blobs are u32 length-prefixed. Cells are
the ciphertext wire encoding from medvault.records. The full byte layout
is documented in docs/PROTOCOL.md.
"""

from __future__ import annotations

import struct
from typing import List, Optional

from ..errors import (
    InvertedRange,
    MalformedRequest,
    SchemeMismatch,
    StoreError,
    UnknownObject,
    UnknownTable,
)
from ..records import Ciphertext

MAX_FRAME = 64 * 1024 * 1024

REQ_CREATE_TABLE = 1
REQ_PUT_ROWS = 2
REQ_SCAN_POINT = 3
REQ_SCAN_RANGE = 4
REQ_PUT_OBJECT = 5
REQ_GET_OBJECT = 6
REQ_DUMP_LOG = 7
REQ_LIST_OBJECTS = 8

KIND_NAMES = {
    REQ_CREATE_TABLE: "create_table",
    REQ_PUT_ROWS: "put_rows",
    REQ_SCAN_POINT: "scan_point",
    REQ_SCAN_RANGE: "scan_range",
    REQ_PUT_OBJECT: "put_object",
    REQ_GET_OBJECT: "get_object",
    REQ_DUMP_LOG: "dump_log",
    REQ_LIST_OBJECTS: "list_objects",
}

STATUS_OK = 0
STATUS_ERROR = 1

ERR_UNKNOWN_TABLE = 1
ERR_UNKNOWN_OBJECT = 2
ERR_SCHEME_MISMATCH = 3
ERR_INVERTED_RANGE = 4
ERR_MALFORMED = 5

_ERROR_CLASSES = {
    ERR_UNKNOWN_TABLE: UnknownTable,
    ERR_UNKNOWN_OBJECT: UnknownObject,
    ERR_SCHEME_MISMATCH: SchemeMismatch,
    ERR_INVERTED_RANGE: InvertedRange,
    ERR_MALFORMED: MalformedRequest,
}
_ERROR_CODES = {cls: code for code, cls in _ERROR_CLASSES.items()}


def error_code_for(exc: StoreError) -> int:
    return _ERROR_CODES.get(type(exc), ERR_MALFORMED)


def error_for(code: int, message: str) -> StoreError:
    return _ERROR_CLASSES.get(code, StoreError)(message)


def read_exact(stream, n: int) -> Optional[bytes]:
    """Read exactly n bytes; None on clean EOF before the first byte."""
    buf = b""
    while len(buf) < n:
        chunk = stream.recv(n - len(buf)) if hasattr(stream, "recv") else stream.read(n - len(buf))
        if not chunk:
            return None if not buf else _truncated()
        buf += chunk
    return buf


def _truncated():
    raise MalformedRequest("truncated frame")


def read_frame(stream) -> Optional[bytes]:
    header = read_exact(stream, 4)
    if header is None:
        return None
    (length,) = struct.unpack("!I", header)
    if length > MAX_FRAME:
        raise MalformedRequest(f"frame too large: {length}")
    body = read_exact(stream, length)
    if body is None:
        _truncated()
    return body


def frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise MalformedRequest(f"frame too large: {len(payload)}")
    return struct.pack("!I", len(payload)) + payload


class Writer:
    def __init__(self) -> None:
        self._parts: List[bytes] = []

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack("!B", v))
        return self

    def u16(self, v: int) -> "Writer":
        self._parts.append(struct.pack("!H", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack("!I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack("!Q", v))
        return self

    def text(self, s: str) -> "Writer":
        raw = s.encode("utf-8")
        return self.u16(len(raw))._raw(raw)

    def blob(self, b: bytes) -> "Writer":
        return self.u32(len(b))._raw(b)

    def cell(self, ct: Ciphertext) -> "Writer":
        return self._raw(ct.to_wire())

    def _raw(self, b: bytes) -> "Writer":
        self._parts.append(b)
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, buf: bytes) -> None:
        self._buf = buf
        self._off = 0

    def _take(self, n: int) -> bytes:
        if self._off + n > len(self._buf):
            raise MalformedRequest("message shorter than declared")
        out = self._buf[self._off : self._off + n]
        self._off += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack("!H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack("!I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack("!Q", self._take(8))[0]

    def text(self) -> str:
        return self._take(self.u16()).decode("utf-8")

    def blob(self) -> bytes:
        return self._take(self.u32())

    def cell(self) -> Ciphertext:
        try:
            ct, off = Ciphertext.from_wire(self._buf, self._off)
        except (ValueError, struct.error) as exc:
            raise MalformedRequest(str(exc)) from exc
        self._off = off
        return ct

    def at_end(self) -> bool:
        return self._off == len(self._buf)

    def expect_end(self) -> None:
        if not self.at_end():
            raise MalformedRequest("trailing bytes in message")
