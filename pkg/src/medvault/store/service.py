"""The storage service itself: honest-but-curious, ciphertext only.

State is a set of registered tables (column id -> scheme byte) holding
encrypted rows, plus an object blob space. Durability is an append-only
segment file replayed on start. Every received frame is appended to an
observation log, which doubles as the leakage-audit surface: if the
engine upstream is correct, nothing in this log ever contains plaintext.

Scans compare raw cell payload bytes: equality for deterministic columns,
lexicographic order for order-preserving columns. No decryption happens
here; the module deliberately has no dependency on the key-handling layer.
"""

from __future__ import annotations

import socket
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..errors import (
    InvertedRange,
    MalformedRequest,
    SchemeMismatch,
    StoreError,
    UnknownObject,
    UnknownTable,
)
from ..records import SCHEME_DETERMINISTIC, SCHEME_ORDER_PRESERVING, Ciphertext, EncryptedRow
from . import wire
from .wire import Reader, Writer

_SEG_TABLE = 1
_SEG_ROWS = 2
_SEG_OBJECT = 3


@dataclass
class _Table:
    schemes: Dict[str, int] = field(default_factory=dict)
    rows: List[EncryptedRow] = field(default_factory=list)


@dataclass(frozen=True)
class ObservationEntry:
    ts_micros: int
    kind: int
    raw: bytes


class StorageService:
    """Request dispatcher and persistent state for one store instance."""

    def __init__(self, data_dir: Optional[str] = None) -> None:
        self._tables: Dict[str, _Table] = {}
        self._objects: Dict[str, Tuple[Ciphertext, Ciphertext]] = {}
        self._next_row_handle = 1
        self._next_object = 1
        self._lock = threading.RLock()
        self.observations: List[ObservationEntry] = []
        self._data_dir = Path(data_dir) if data_dir else None
        self._segment = None
        self._obslog = None
        if self._data_dir:
            self._data_dir.mkdir(parents=True, exist_ok=True)
            self._replay()
            self._segment = open(self._data_dir / "segments.log", "ab")
            self._obslog = open(self._data_dir / "observations.log", "ab")

    # --- durability ---------------------------------------------------------

    def _replay(self) -> None:
        seg = self._data_dir / "segments.log"
        if seg.exists():
            with open(seg, "rb") as fh:
                while True:
                    record = wire.read_frame(fh)
                    if record is None:
                        break
                    self._apply_segment(record)
        obs = self._data_dir / "observations.log"
        if obs.exists():
            with open(obs, "rb") as fh:
                while True:
                    record = wire.read_frame(fh)
                    if record is None:
                        break
                    r = Reader(record)
                    self.observations.append(ObservationEntry(r.u64(), r.u8(), r.blob()))

    def _apply_segment(self, record: bytes) -> None:
        r = Reader(record)
        kind = r.u8()
        if kind == _SEG_TABLE:
            table_id = r.text()
            table = self._tables.setdefault(table_id, _Table())
            for _ in range(r.u16()):
                col, scheme = r.text(), r.u8()
                table.schemes[col] = scheme
        elif kind == _SEG_ROWS:
            table_id = r.text()
            table = self._tables[table_id]
            for _ in range(r.u32()):
                handle = r.u64()
                cells = tuple(r.cell() for _ in range(r.u16()))
                table.rows.append(EncryptedRow(handle, cells))
                self._next_row_handle = max(self._next_row_handle, handle + 1)
        elif kind == _SEG_OBJECT:
            handle = r.text()
            self._objects[handle] = (r.cell(), r.cell())
            num = int(handle.rsplit("-", 1)[1])
            self._next_object = max(self._next_object, num + 1)

    def _append_segment(self, record: bytes) -> None:
        if self._segment:
            self._segment.write(wire.frame(record))
            self._segment.flush()

    def close(self) -> None:
        for fh in (self._segment, self._obslog):
            if fh:
                fh.close()

    # --- request handling -----------------------------------------------------

    def handle_raw(self, raw_frame: bytes) -> bytes:
        """Process one framed request; returns the framed response."""
        payload = raw_frame[4:]
        kind = payload[0] if payload else 0
        self._observe(kind, raw_frame)
        try:
            if not payload:
                raise MalformedRequest("empty request")
            body = self._dispatch(kind, Reader(payload[1:]))
            return wire.frame(bytes([wire.STATUS_OK]) + body)
        except StoreError as exc:
            err = Writer().u16(wire.error_code_for(exc)).text(str(exc)).getvalue()
            return wire.frame(bytes([wire.STATUS_ERROR]) + err)

    def _observe(self, kind: int, raw: bytes) -> None:
        entry = ObservationEntry(time.time_ns() // 1000, kind, raw)
        with self._lock:
            self.observations.append(entry)
            if self._obslog:
                record = Writer().u64(entry.ts_micros).u8(entry.kind).blob(entry.raw).getvalue()
                self._obslog.write(wire.frame(record))
                self._obslog.flush()

    def _dispatch(self, kind: int, r: Reader) -> bytes:
        if kind == wire.REQ_CREATE_TABLE:
            return self._create_table(r)
        if kind == wire.REQ_PUT_ROWS:
            return self._put_rows(r)
        if kind == wire.REQ_SCAN_POINT:
            return self._scan_point(r)
        if kind == wire.REQ_SCAN_RANGE:
            return self._scan_range(r)
        if kind == wire.REQ_PUT_OBJECT:
            return self._put_object(r)
        if kind == wire.REQ_GET_OBJECT:
            return self._get_object(r)
        if kind == wire.REQ_DUMP_LOG:
            return self._dump_log(r)
        if kind == wire.REQ_LIST_OBJECTS:
            return self._list_objects(r)
        raise MalformedRequest(f"unknown message kind: {kind}")

    # --- operations -----------------------------------------------------------

    def _create_table(self, r: Reader) -> bytes:
        table_id = r.text()
        specs = [(r.text(), r.u8()) for _ in range(r.u16())]
        r.expect_end()
        with self._lock:
            table = self._tables.setdefault(table_id, _Table())
            for col, scheme in specs:
                existing = table.schemes.get(col)
                if existing is not None and existing != scheme:
                    raise MalformedRequest(f"column {col} re-registered with a different scheme")
                table.schemes[col] = scheme
            record = Writer().u8(_SEG_TABLE).text(table_id).u16(len(specs))
            for col, scheme in specs:
                record.text(col).u8(scheme)
            self._append_segment(record.getvalue())
        return b""

    def _require_table(self, table_id: str) -> _Table:
        table = self._tables.get(table_id)
        if table is None:
            raise UnknownTable(f"table not registered: {table_id}")
        return table

    def _put_rows(self, r: Reader) -> bytes:
        table_id = r.text()
        nrows = r.u32()
        rows = []
        for _ in range(nrows):
            cells = tuple(r.cell() for _ in range(r.u16()))
            rows.append(cells)
        r.expect_end()
        with self._lock:
            table = self._require_table(table_id)
            for cells in rows:
                for ct in cells:
                    scheme = table.schemes.get(ct.column_id)
                    if scheme is None:
                        raise MalformedRequest(f"column not registered: {ct.column_id}")
                    if scheme != ct.scheme_id:
                        raise SchemeMismatch(
                            f"cell scheme {ct.scheme_id} differs from registered {scheme}"
                        )
            handles = []
            record = Writer().u8(_SEG_ROWS).text(table_id).u32(len(rows))
            for cells in rows:
                handle = self._next_row_handle
                self._next_row_handle += 1
                table.rows.append(EncryptedRow(handle, cells))
                handles.append(handle)
                record.u64(handle).u16(len(cells))
                for ct in cells:
                    record.cell(ct)
            self._append_segment(record.getvalue())
        out = Writer().u32(len(handles))
        for h in handles:
            out.u64(h)
        return out.getvalue()

    def _check_scan_column(self, table: _Table, column_id: str, expected_scheme: int) -> None:
        scheme = table.schemes.get(column_id)
        if scheme is None:
            raise MalformedRequest(f"column not registered: {column_id}")
        if scheme != expected_scheme:
            raise SchemeMismatch(
                f"scan requires scheme {expected_scheme}, column has {scheme}"
            )

    def _scan_point(self, r: Reader) -> bytes:
        table_id, column_id = r.text(), r.text()
        ct = r.cell()
        r.expect_end()
        table = self._require_table(table_id)
        self._check_scan_column(table, column_id, SCHEME_DETERMINISTIC)
        matches = [
            row
            for row in table.rows[: len(table.rows)]
            if any(c.column_id == column_id and c.payload == ct.payload for c in row.cells)
        ]
        return _encode_rows(matches)

    def _scan_range(self, r: Reader) -> bytes:
        table_id, column_id = r.text(), r.text()
        lo, hi = r.cell(), r.cell()
        r.expect_end()
        table = self._require_table(table_id)
        self._check_scan_column(table, column_id, SCHEME_ORDER_PRESERVING)
        if lo.payload > hi.payload:
            raise InvertedRange("range lower bound exceeds upper bound")
        matches = [
            row
            for row in table.rows[: len(table.rows)]
            if any(
                c.column_id == column_id and lo.payload <= c.payload <= hi.payload
                for c in row.cells
            )
        ]
        return _encode_rows(matches)

    def _put_object(self, r: Reader) -> bytes:
        class_tag, payload = r.cell(), r.cell()
        r.expect_end()
        with self._lock:
            handle = f"obj-{self._next_object}"
            self._next_object += 1
            self._objects[handle] = (class_tag, payload)
            record = Writer().u8(_SEG_OBJECT).text(handle).cell(class_tag).cell(payload)
            self._append_segment(record.getvalue())
        return Writer().text(handle).getvalue()

    def _get_object(self, r: Reader) -> bytes:
        handle = r.text()
        r.expect_end()
        found = self._objects.get(handle)
        if found is None:
            raise UnknownObject(f"no such object: {handle}")
        class_tag, payload = found
        return Writer().cell(class_tag).cell(payload).getvalue()

    def _list_objects(self, r: Reader) -> bytes:
        class_tag = r.cell()
        r.expect_end()
        if class_tag.scheme_id != SCHEME_DETERMINISTIC:
            raise SchemeMismatch("class tag listing requires a deterministic tag")
        handles = [
            handle
            for handle, (tag, _) in self._objects.items()
            if tag.payload == class_tag.payload
        ]
        out = Writer().u32(len(handles))
        for h in handles:
            out.text(h)
        return out.getvalue()

    def _dump_log(self, r: Reader) -> bytes:
        r.expect_end()
        with self._lock:
            entries = list(self.observations)
        out = Writer().u32(len(entries))
        for e in entries:
            out.u64(e.ts_micros).u8(e.kind).blob(e.raw)
        return out.getvalue()


def _encode_rows(rows: List[EncryptedRow]) -> bytes:
    out = Writer().u32(len(rows))
    for row in rows:
        out.u64(row.row_handle).u16(len(row.cells))
        for ct in row.cells:
            out.cell(ct)
    return out.getvalue()


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        service: StorageService = self.server.service  # type: ignore[attr-defined]
        stream = self.request
        while True:
            try:
                header = wire.read_exact(stream, 4)
                if header is None:
                    return
                (length,) = struct.unpack("!I", header)
                if length > wire.MAX_FRAME:
                    return
                body = wire.read_exact(stream, length)
                if body is None:
                    return
            except (MalformedRequest, ConnectionError, OSError):
                return
            response = service.handle_raw(header + body)
            try:
                stream.sendall(response)
            except OSError:
                return


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class StoreServer:
    """TCP front for a StorageService; used standalone or inside tests."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, data_dir: Optional[str] = None):
        self.service = StorageService(data_dir)
        self._server = _TCPServer((host, port), _Handler)
        self._server.service = self.service  # type: ignore[attr-defined]
        self.host, self.port = self._server.server_address
        self._thread: Optional[threading.Thread] = None

    def start(self) -> "StoreServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self.service.close()

    def serve_forever(self) -> None:
        self._server.serve_forever()


def serve(host: str, port: int, data_dir: Optional[str]) -> None:
    server = StoreServer(host, port, data_dir)
    print(f"store listening on {server.host}:{server.port}")
    server.serve_forever()
