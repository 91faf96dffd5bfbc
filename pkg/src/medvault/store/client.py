"""Socket client for the storage service, one method per message kind.

Transport failures surface as StoreUnavailable so the ingestion path can
abort atomically; protocol-level errors are re-raised as their typed
exceptions from the response frame.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass
from typing import List, Optional, Tuple

from ..errors import StoreUnavailable
from ..records import Ciphertext, EncryptedObject, EncryptedRow
from . import wire
from .wire import Reader, Writer


@dataclass(frozen=True)
class LogEntry:
    ts_micros: int
    kind: int
    raw: bytes


class StoreClient:
    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._lock = threading.Lock()

    def close(self) -> None:
        with self._lock:
            if self._sock is not None:
                try:
                    self._sock.close()
                finally:
                    self._sock = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                self._sock = socket.create_connection((self.host, self.port), self.timeout)
            except OSError as exc:
                raise StoreUnavailable(f"store unreachable at {self.host}:{self.port}") from exc
        return self._sock

    def _call(self, payload: bytes) -> Reader:
        with self._lock:
            for attempt in (0, 1):
                sock = self._connect()
                try:
                    sock.sendall(wire.frame(payload))
                    response = wire.read_frame(sock)
                    if response is None:
                        raise OSError("connection closed")
                    break
                except OSError as exc:
                    self._sock = None
                    if attempt == 1:
                        raise StoreUnavailable(str(exc)) from exc
        r = Reader(response)
        status = r.u8()
        if status == wire.STATUS_ERROR:
            code = r.u16()
            raise wire.error_for(code, r.text())
        return r

    # --- operations -----------------------------------------------------------

    def create_table(self, table_id: str, columns: List[Tuple[str, int]]) -> None:
        w = Writer().u8(wire.REQ_CREATE_TABLE).text(table_id).u16(len(columns))
        for col, scheme in columns:
            w.text(col).u8(scheme)
        self._call(w.getvalue())

    def put_rows(self, table_id: str, rows: List[List[Ciphertext]]) -> List[int]:
        w = Writer().u8(wire.REQ_PUT_ROWS).text(table_id).u32(len(rows))
        for cells in rows:
            w.u16(len(cells))
            for ct in cells:
                w.cell(ct)
        r = self._call(w.getvalue())
        return [r.u64() for _ in range(r.u32())]

    def scan_point(self, table_id: str, column_id: str, ct: Ciphertext) -> List[EncryptedRow]:
        w = Writer().u8(wire.REQ_SCAN_POINT).text(table_id).text(column_id).cell(ct)
        return _read_rows(self._call(w.getvalue()))

    def scan_range(
        self, table_id: str, column_id: str, lo: Ciphertext, hi: Ciphertext
    ) -> List[EncryptedRow]:
        w = Writer().u8(wire.REQ_SCAN_RANGE).text(table_id).text(column_id).cell(lo).cell(hi)
        return _read_rows(self._call(w.getvalue()))

    def put_object(self, class_tag: Ciphertext, payload: Ciphertext) -> str:
        w = Writer().u8(wire.REQ_PUT_OBJECT).cell(class_tag).cell(payload)
        return self._call(w.getvalue()).text()

    def get_object(self, handle: str) -> EncryptedObject:
        w = Writer().u8(wire.REQ_GET_OBJECT).text(handle)
        r = self._call(w.getvalue())
        return EncryptedObject(handle, r.cell(), r.cell())

    def list_objects(self, class_tag: Ciphertext) -> List[str]:
        w = Writer().u8(wire.REQ_LIST_OBJECTS).cell(class_tag)
        r = self._call(w.getvalue())
        return [r.text() for _ in range(r.u32())]

    def dump_log(self) -> List[LogEntry]:
        r = self._call(Writer().u8(wire.REQ_DUMP_LOG).getvalue())
        return [LogEntry(r.u64(), r.u8(), r.blob()) for _ in range(r.u32())]


def _read_rows(r: Reader) -> List[EncryptedRow]:
    rows = []
    for _ in range(r.u32()):
        handle = r.u64()
        cells = tuple(r.cell() for _ in range(r.u16()))
        rows.append(EncryptedRow(handle, cells))
    return rows
