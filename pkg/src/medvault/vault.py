"""The trusted vault engine.

Owns every secret: column keys, order-preserving codebooks, the pseudonym
map, table schemas, policies, local indexes, and the confirmation queue.
Uploads run the full pipeline (parse, entity resolution, table creation,
schema tags, ingest enrichment, encrypt, put) and commit per document:
nothing becomes visible until one atomic state write lands, so a crash at
any stage leaves either all of a document's effects or none. Rows in the
store are append-only; updates supersede old handles engine-side, and
scans filter to live handles, which also hides orphan rows left by
crashed ingestions.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from . import crypto
from .config import (
    OBJECTS_SCHEMA,
    OBJECTS_TABLE,
    ConfigBundle,
    VaultConfig,
    init_vault_dir,
    load_config_bundle,
)
from .crypto import ColumnKey, NameMap, OpeCodebook
from .enrichment import (
    PROV_AGGREGATE,
    PROV_EXTRAPOLATED,
    PROV_SOURCE,
    EnrichedBinding,
    ExtrapolationProposal,
    LocalIndex,
    apply_ingest_enrichment,
    compute_aggregate,
    extrapolate_at_query,
    maintain_indexes,
)
from .errors import (
    AlreadyDecided,
    SchemeMismatch,
    UnknownProposal,
    UnrecognizedQuery,
    VaultError,
)
from .parser import (
    DESCRIPTION,
    OBJECT_CLASS,
    DocumentFormat,
    MetadataTag,
    MetadataTagSet,
    RawDocument,
    load_documents,
    parse_document,
    read_manifest,
)
from .policies import PolicyStore, StoragePolicy
from .queries import (
    ManifestEntry,
    PlanStep,
    Query,
    QueryFilter,
    QueryPlan,
    ReleasedObject,
    ResultSet,
    Section,
    apply_local_filters,
    choose_store_predicate,
    find_derived_spec,
    normalized_shape,
    parse_query,
    resolve_aggregate_table,
)
from .records import SCHEME_IDS, Ciphertext, EncryptedRow
from .reference import PlainObject, PlainReferenceEngine
from .schema import (
    SchemaRegistry,
    SchemaTag,
    TableSchema,
    ensure_tables,
    make_schema_tags,
    resolve_entities,
)
from .store.client import LogEntry, StoreClient
from .values import Month, Scalar, display_scalar, scalar_from_json, scalar_to_json

PIPELINE_STAGES = ("parse", "resolve", "tables", "schema_tags", "enrich", "encrypt_put")

_norm = lambda s: " ".join(str(s).strip().lower().split())


@dataclass
class PendingConfirmation:
    proposal_id: str
    table: str
    row_handle: int
    column: str
    value: Scalar
    source_table: str
    source_date: date
    source_time: Optional[str]
    status: str = "pending"
    created_at: float = field(default_factory=time.time)

    def to_json(self) -> dict:
        return {
            "proposal_id": self.proposal_id,
            "table": self.table,
            "row_handle": self.row_handle,
            "column": self.column,
            "value": scalar_to_json(self.value),
            "display_value": display_scalar(self.value),
            "source_table": self.source_table,
            "source_date": self.source_date.isoformat(),
            "source_time": self.source_time,
            "status": self.status,
        }


@dataclass
class DocReport:
    doc_id: str
    status: str  # "ok" | "error"
    error: Optional[str] = None
    rows_added: Dict[str, int] = field(default_factory=dict)
    derived_updated: Dict[str, List[str]] = field(default_factory=dict)
    object_handles: List[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "status": self.status,
            "error": self.error,
            "rows_added": self.rows_added,
            "derived_updated": self.derived_updated,
            "object_handles": self.object_handles,
        }


@dataclass
class IngestReport:
    docs: List[DocReport]
    table_counts: Dict[str, int]
    report_id: Optional[str] = None

    @property
    def ok_count(self) -> int:
        return sum(1 for d in self.docs if d.status == "ok")

    @property
    def error_count(self) -> int:
        return sum(1 for d in self.docs if d.status == "error")

    def to_json(self) -> dict:
        return {
            "docs": [d.to_json() for d in self.docs],
            "table_counts": self.table_counts,
            "ok": self.ok_count,
            "errors": self.error_count,
            "report_id": self.report_id,
        }


_OBJECT_PAYLOAD_COLUMN = "__payload__"


class VaultEngine:
    """Trusted-side facade: upload, query, share, confirmations, audits."""

    def __init__(
        self,
        vault_dir: Path,
        store: Optional[StoreClient] = None,
        config: Optional[VaultConfig] = None,
    ) -> None:
        self.vault_dir = Path(init_vault_dir(vault_dir, config))
        self.bundle: ConfigBundle = load_config_bundle(self.vault_dir)
        self.config = self.bundle.config
        self.store = store or StoreClient(self.config.store_host, self.config.store_port)
        self.fault_hook: Optional[Callable[[str], None]] = None
        self._lock = threading.RLock()

        self.registry: SchemaRegistry = self.bundle.new_registry()
        self.policy_store: PolicyStore = self.bundle.new_policy_store()
        self._name_secret = os.urandom(crypto.KEY_BYTES)
        self._column_keys: Dict[Tuple[str, str], ColumnKey] = {}
        self._books: Dict[Tuple[str, str], OpeCodebook] = {}
        self._indexes: Dict[Tuple[str, str], LocalIndex] = {}
        self._live: Dict[str, Set[int]] = {}
        self._superseded: Dict[str, Set[int]] = {}
        self._derived_live: Dict[Tuple[str, str], int] = {}
        self._cell_prov: Dict[Tuple[str, int, str], str] = {}
        self._pending: Dict[str, PendingConfirmation] = {}
        self._decided: Dict[str, str] = {}
        self._rejected_targets: Set[Tuple[str, int, str]] = set()
        self._created_at_store: Set[str] = set()
        self._column_name_cache: Dict[str, Dict[str, str]] = {}

        self._load_state()
        if OBJECTS_TABLE not in self.registry.tables:
            self.registry.tables[OBJECTS_TABLE] = TableSchema(
                OBJECTS_SCHEMA.table_name,
                list(OBJECTS_SCHEMA.columns),
                signature=frozenset(),
            )
        self._namemap = NameMap(self._name_secret)

    def close(self) -> None:
        self.store.close()

    # --- persistence -----------------------------------------------------------

    @property
    def _state_path(self) -> Path:
        return self.vault_dir / "vault_state.json"

    @property
    def _patterns_path(self) -> Path:
        return self.vault_dir / "patterns.json"

    def _load_state(self) -> None:
        if self._patterns_path.exists():
            self.policy_store.patterns_from_json(json.loads(self._patterns_path.read_text()))
        if not self._state_path.exists():
            return
        data = json.loads(self._state_path.read_text())
        self._name_secret = bytes.fromhex(data["name_secret"])
        for table, col, scheme, hexkey in data["column_keys"]:
            self._column_keys[(table, col)] = ColumnKey(table, col, scheme, bytes.fromhex(hexkey))
        self.registry.load_json(data["registry"])
        for table, col, book in data["ope_books"]:
            self._books[(table, col)] = OpeCodebook.from_json(book)
        for idx in data["indexes"]:
            loaded = LocalIndex.from_json(idx)
            self._indexes[(loaded.table, loaded.column)] = loaded
        self._live = {t: set(v) for t, v in data["live"].items()}
        self._superseded = {t: set(v) for t, v in data["superseded"].items()}
        self._derived_live = {(t, m): h for t, m, h in data["derived_live"]}
        self._cell_prov = {(t, h, c): p for t, h, c, p in data["cell_provenance"]}
        for p in data["pending"]:
            self._pending[p["proposal_id"]] = PendingConfirmation(
                proposal_id=p["proposal_id"],
                table=p["table"],
                row_handle=p["row_handle"],
                column=p["column"],
                value=scalar_from_json(p["value"]),
                source_table=p["source_table"],
                source_date=date.fromisoformat(p["source_date"]),
                source_time=p["source_time"],
            )
        self._decided = dict(data["decided"])
        self._rejected_targets = {(t, h, c) for t, h, c in data["rejected_targets"]}
        learned = PolicyStore.from_json(data["learned_policies"])
        self.policy_store.apply_learned(learned.storage)

    def _save_state(self) -> None:
        learned = PolicyStore(
            storage=[p for p in self.policy_store.storage if p.origin == "learned"]
        )
        data = {
            "name_secret": self._name_secret.hex(),
            "column_keys": [
                [k.table, k.column, k.scheme, k.key_material.hex()]
                for k in self._column_keys.values()
            ],
            "registry": self.registry.to_json(),
            "ope_books": [[t, c, b.to_json()] for (t, c), b in self._books.items()],
            "indexes": [idx.to_json() for idx in self._indexes.values()],
            "live": {t: sorted(v) for t, v in self._live.items()},
            "superseded": {t: sorted(v) for t, v in self._superseded.items()},
            "derived_live": [[t, m, h] for (t, m), h in self._derived_live.items()],
            "cell_provenance": [[t, h, c, p] for (t, h, c), p in self._cell_prov.items()],
            "pending": [p.to_json() for p in self._pending.values()],
            "decided": self._decided,
            "rejected_targets": [[t, h, c] for t, h, c in sorted(self._rejected_targets)],
            "learned_policies": learned.to_json(),
        }
        tmp = self._state_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(data))
        os.replace(tmp, self._state_path)

    def _save_patterns(self) -> None:
        tmp = self._patterns_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.policy_store.patterns_to_json()))
        os.replace(tmp, self._patterns_path)

    # --- crypto plumbing ----------------------------------------------------------

    def _schema(self, table: str) -> TableSchema:
        schema = self.registry.tables.get(table)
        if schema is None:
            raise UnrecognizedQuery(f"unknown table: {table}")
        return schema

    def _key(self, table: str, column: str) -> ColumnKey:
        key = self._column_keys.get((table, column))
        if key is None:
            if column == _OBJECT_PAYLOAD_COLUMN:
                scheme = "opaque"
            else:
                col = self._schema(table).column(column)
                if col is None:
                    raise VaultError(f"no column {column} in {table}")
                scheme = col.encryption
            key = ColumnKey.generate(table, column, scheme)
            self._column_keys[(table, column)] = key
        return key

    def _book(self, table: str, column: str) -> OpeCodebook:
        book = self._books.get((table, column))
        if book is None:
            book = self._books[(table, column)] = OpeCodebook()
        return book

    def _refs(self, table: str, column: str) -> Tuple[str, str]:
        return self._namemap.table_id(table), self._namemap.column_id(table, column)

    def _encrypt_value(self, table: str, column: str, value: Scalar) -> Ciphertext:
        key = self._key(table, column)
        refs = self._refs(table, column)
        if key.scheme == "deterministic":
            return crypto.det_encrypt(key, value, refs)
        if key.scheme == "order_preserving":
            return crypto.ope_encrypt(key, self._book(table, column), value, refs)
        return crypto.opaque_encrypt_value(key, value, refs)

    def _column_names_by_id(self, table: str) -> Dict[str, str]:
        cached = self._column_name_cache.get(table)
        schema = self._schema(table)
        if cached is None or len(cached) != len(schema.columns):
            cached = {
                self._namemap.column_id(table, c.name): c.name for c in schema.columns
            }
            self._column_name_cache[table] = cached
        return cached

    def _decrypt_row(self, table: str, row: EncryptedRow) -> Dict[str, Optional[Scalar]]:
        schema = self._schema(table)
        names = self._column_names_by_id(table)
        out: Dict[str, Optional[Scalar]] = {c.name: None for c in schema.columns}
        for ct in row.cells:
            name = names.get(ct.column_id)
            if name is None:
                continue
            col = schema.column(name)
            if SCHEME_IDS[col.encryption] != ct.scheme_id:
                raise SchemeMismatch(f"{table}.{name}: stored scheme differs from schema")
            key = self._key(table, name)
            if col.encryption == "deterministic":
                out[name] = crypto.det_decrypt(key, ct)
            elif col.encryption == "order_preserving":
                out[name] = crypto.ope_decrypt(key, self._book(table, name), ct)
            else:
                out[name] = crypto.opaque_decrypt_value(key, ct)
        return out

    def _encrypt_bindings(self, table: str, bindings: Dict[str, Scalar]) -> List[Ciphertext]:
        cells = []
        for column, value in bindings.items():
            if value is None:
                continue
            cells.append(self._encrypt_value(table, column, value))
        return cells

    # --- store plumbing -----------------------------------------------------------

    def _store_create_table(self, schema: TableSchema) -> None:
        table_id = self._namemap.table_id(schema.table_name)
        specs = [
            (self._namemap.column_id(schema.table_name, c.name), SCHEME_IDS[c.encryption])
            for c in schema.columns
        ]
        self.store.create_table(table_id, specs)
        self._created_at_store.add(schema.table_name)

    def _ensure_store_table(self, table: str) -> None:
        if table not in self._created_at_store:
            self._store_create_table(self._schema(table))

    def _live_rows(
        self, table: str, rows: Sequence[EncryptedRow]
    ) -> List[Tuple[int, Dict[str, Optional[Scalar]]]]:
        live = self._live.get(table, set())
        out = [
            (row.row_handle, self._decrypt_row(table, row))
            for row in rows
            if row.row_handle in live
        ]
        out.sort(key=lambda pair: pair[0])
        return out

    def _scan_point_plain(
        self, table: str, column: str, value: Scalar, plan: Optional[QueryPlan] = None
    ) -> List[Tuple[int, Dict[str, Optional[Scalar]]]]:
        ct = self._encrypt_value(table, column, value)
        if plan is not None:
            plan.add("store_point_scan", table=table, column=column)
            plan.encrypted_literals.append(ct)
        if not self._live.get(table):
            return []
        refs = self._refs(table, column)
        return self._live_rows(table, self.store.scan_point(refs[0], refs[1], ct))

    def _range_bounds(
        self, table: str, column: str, lo: Optional[Scalar], hi: Optional[Scalar]
    ) -> Tuple[Ciphertext, Ciphertext]:
        key = self._key(table, column)
        book = self._book(table, column)
        refs = self._refs(table, column)
        lo_ct = (
            crypto.ope_encrypt(key, book, lo, refs)
            if lo is not None
            else Ciphertext(SCHEME_IDS["order_preserving"], refs[0], refs[1], b"")
        )
        hi_ct = (
            crypto.ope_encrypt(key, book, hi, refs)
            if hi is not None
            else Ciphertext(
                SCHEME_IDS["order_preserving"], refs[0], refs[1], crypto.ope_range_top(book)
            )
        )
        return lo_ct, hi_ct

    def _scan_range_plain(
        self,
        table: str,
        column: str,
        lo: Optional[Scalar],
        hi: Optional[Scalar],
        plan: Optional[QueryPlan] = None,
    ) -> List[Tuple[int, Dict[str, Optional[Scalar]]]]:
        lo_ct, hi_ct = self._range_bounds(table, column, lo, hi)
        if plan is not None:
            plan.add("store_range_scan", table=table, column=column)
            plan.encrypted_literals.extend([lo_ct, hi_ct])
        if not self._live.get(table):
            return []
        refs = self._refs(table, column)
        return self._live_rows(table, self.store.scan_range(refs[0], refs[1], lo_ct, hi_ct))

    def _first_ope_column(self, table: str) -> Optional[str]:
        for c in self._schema(table).columns:
            if c.encryption == "order_preserving":
                return c.name
        return None

    def _full_scan_plain(
        self, table: str, plan: Optional[QueryPlan] = None
    ) -> List[Tuple[int, Dict[str, Optional[Scalar]]]]:
        if not self._live.get(table):
            return []
        column = self._first_ope_column(table)
        if column is not None:
            return self._scan_range_plain(table, column, None, None, plan)
        # deterministic-keyed tables (monthly rollups) enumerate via the
        # trusted-side month index
        out = []
        for (t, month_iso), _ in sorted(self._derived_live.items()):
            if t != table:
                continue
            out.extend(self._scan_point_plain(table, "Date", Month.from_iso(month_iso), plan))
        return out

    def _month_rows(self, table: str, month: Month) -> List[Dict[str, Optional[Scalar]]]:
        """Committed rows of a month, served from local indexes when they
        cover the table, else fetched from the store."""
        date_idx = self._indexes.get((table, "Date"))
        col_idxs = {
            c: self._indexes.get((table, c))
            for c in self._schema(table).column_names()
            if c != "Date"
        }
        if date_idx is not None and all(
            idx is not None for name, idx in col_idxs.items() if self._needs_index(table, name)
        ):
            handles = date_idx.range(month.first_day(), month.last_day())
            rows = []
            for h in handles:
                row: Dict[str, Optional[Scalar]] = {"Date": date_idx.value_of(h)}
                for name, idx in col_idxs.items():
                    row[name] = idx.value_of(h) if idx is not None else None
                rows.append(row)
            return rows
        return [
            row
            for _, row in self._scan_range_plain(table, "Date", month.first_day(), month.last_day())
        ]

    def _needs_index(self, table: str, column: str) -> bool:
        aggregated = set()
        for p in self.policy_store.storage:
            if p.base_table == table:
                for spec in p.derived_tables:
                    aggregated.update(spec.columns)
        return column in aggregated

    def _day_rows(self, table: str, d: date) -> List[Dict[str, Optional[Scalar]]]:
        return [row for _, row in self._scan_range_plain(table, "Date", d, d)]

    # --- ingestion ------------------------------------------------------------------

    def _fault(self, stage: str) -> None:
        if self.fault_hook is not None:
            self.fault_hook(stage)

    def upload_manifest(self, manifest_path: Path) -> IngestReport:
        docs = load_documents(read_manifest(Path(manifest_path)))
        return self.upload_documents(docs)

    def upload_documents(self, docs: Sequence[RawDocument]) -> IngestReport:
        """Run the pipeline per document; a failing document is reported and
        skipped without aborting the batch."""
        with self._lock:
            reports = []
            for doc in docs:
                try:
                    reports.append(self._ingest_document(doc))
                except VaultError as exc:
                    reports.append(DocReport(doc.doc_id, "error", str(exc)))
            touched: Set[str] = set()
            for r in reports:
                touched.update(r.rows_added)
                touched.update(r.derived_updated)
            counts = {}
            for table in sorted(touched):
                if self._schema(table).is_derived:
                    counts[table] = sum(1 for (t, _m) in self._derived_live if t == table)
                else:
                    counts[table] = len(self._live.get(table, ()))
            report = IngestReport(reports, counts)
            report.report_id = self._write_report(
                "upload", {"kind": "upload", **report.to_json()}
            )
            return report

    def _inject_date(self, tag_set: MetadataTagSet, doc: RawDocument) -> MetadataTagSet:
        tags = tag_set.tags
        if not any(t.keyword == "Date" for t in tags):
            tags = tags + (MetadataTag("Date", doc.upload_time.date()),)
        # keep sample times: stream samples carry observed_at but no Time tag
        observed = next((t.observed_at for t in tags if t.observed_at is not None), None)
        if observed is not None and not any(t.keyword == "Time" for t in tags):
            tags = tags + (MetadataTag("Time", observed.strftime("%H:%M:%S")),)
        if tags is tag_set.tags:
            return tag_set
        return MetadataTagSet(tag_set.doc_id, tags)

    def _ingest_document(self, doc: RawDocument) -> DocReport:
        self._fault("parse")
        tag_sets = parse_document(doc, self.bundle.keywords)

        self._fault("resolve")
        tag_sets = [
            self._inject_date(resolve_entities(ts, self.bundle.synonyms), doc)
            for ts in tag_sets
        ]

        is_object = doc.declared_format == DocumentFormat.OPAQUE_BINARY
        self._fault("tables")
        if not is_object:
            created: List[TableSchema] = []
            for ts in tag_sets:
                created.extend(ensure_tables(ts, self.policy_store.storage, self.registry))
            for schema in created:
                self._store_create_table(schema)

        self._fault("schema_tags")
        if is_object:
            object_bindings = self._object_bindings(tag_sets[0])
            all_tags: List[SchemaTag] = []
        else:
            all_tags = []
            for ts in tag_sets:
                all_tags.extend(make_schema_tags(ts, self.registry, self.policy_store.storage))

        self._fault("enrich")
        final_tags, prov_map = apply_ingest_enrichment(
            all_tags,
            self.policy_store.enrichment,
            self.policy_store.storage,
            self.registry,
            self._month_rows,
        )

        self._fault("encrypt_put")
        report = DocReport(doc.doc_id, "ok")
        new_live: Dict[str, List[Tuple[int, Dict[str, Scalar]]]] = {}
        derived_new: Dict[Tuple[str, str], int] = {}
        prov_updates: Dict[Tuple[str, int, str], str] = {}

        base_rows: Dict[str, List[Dict[str, Scalar]]] = {}
        derived_tags: List[SchemaTag] = []
        for tag in final_tags:
            if self._schema(tag.table_name).is_derived:
                derived_tags.append(tag)
            else:
                base_rows.setdefault(tag.table_name, []).append(tag.as_dict())

        if is_object:
            payload_key = self._key(OBJECTS_TABLE, _OBJECT_PAYLOAD_COLUMN)
            refs = (self._namemap.table_id(OBJECTS_TABLE), self._namemap.column_id(OBJECTS_TABLE, _OBJECT_PAYLOAD_COLUMN))
            payload_ct = crypto.opaque_encrypt(payload_key, doc.content, refs)
            class_tag = self._encrypt_value(OBJECTS_TABLE, "ObjectClass", object_bindings["ObjectClass"])
            self._ensure_store_table(OBJECTS_TABLE)
            handle = self.store.put_object(class_tag, payload_ct)
            report.object_handles.append(handle)
            object_bindings["Handle"] = handle
            base_rows.setdefault(OBJECTS_TABLE, []).append(object_bindings)

        for table, rows in base_rows.items():
            self._ensure_store_table(table)
            table_id = self._namemap.table_id(table)
            encrypted = [self._encrypt_bindings(table, row) for row in rows]
            handles = self.store.put_rows(table_id, encrypted)
            new_live.setdefault(table, []).extend(zip(handles, rows))
            report.rows_added[table] = report.rows_added.get(table, 0) + len(rows)

        for tag in derived_tags:
            table = tag.table_name
            bindings = tag.as_dict()
            month = bindings["Date"]
            self._ensure_store_table(table)
            table_id = self._namemap.table_id(table)
            handles = self.store.put_rows(table_id, [self._encrypt_bindings(table, bindings)])
            derived_new[(table, month.iso())] = handles[0]
            report.derived_updated.setdefault(table, []).append(month.iso())
            for column in bindings:
                if prov_map.get((table, column)) == PROV_AGGREGATE:
                    prov_updates[(table, handles[0], column)] = PROV_AGGREGATE

        # single atomic commit: only now does any of this become visible;
        # a crash before the state write leaves only invisible orphan rows
        self._fault("commit")
        specs = self.policy_store.index_specs()
        for table, rows in new_live.items():
            self._live.setdefault(table, set()).update(h for h, _ in rows)
            maintain_indexes(self._indexes, table, rows, specs)
        for (table, month_iso), handle in derived_new.items():
            old = self._derived_live.get((table, month_iso))
            if old is not None:
                self._supersede(table, old)
            self._derived_live[(table, month_iso)] = handle
            self._live.setdefault(table, set()).add(handle)
        self._cell_prov.update(prov_updates)
        self._save_state()
        return report

    def _object_bindings(self, tag_set: MetadataTagSet) -> Dict[str, Scalar]:
        schema = self._schema(OBJECTS_TABLE)
        bindings: Dict[str, Scalar] = {}
        leftovers: List[str] = []
        for tag in tag_set.tags:
            if schema.column(tag.keyword) is not None and tag.keyword not in bindings:
                from .values import coerce

                bindings[tag.keyword] = coerce(tag.value, schema.column(tag.keyword).value_type)
            elif tag.keyword != DESCRIPTION:
                leftovers.append(f"{tag.keyword}: {display_scalar(tag.value)}")
            else:
                leftovers.append(str(tag.value))
        if leftovers:
            existing = bindings.get(DESCRIPTION)
            joined = "; ".join(leftovers)
            bindings[DESCRIPTION] = f"{existing}; {joined}" if existing else joined
        return bindings

    def _supersede(self, table: str, handle: int) -> None:
        self._live.get(table, set()).discard(handle)
        self._superseded.setdefault(table, set()).add(handle)
        for (t, _c), idx in self._indexes.items():
            if t == table:
                idx.remove_handle(handle)

    # --- queries -------------------------------------------------------------------

    def query(self, text: str) -> ResultSet:
        q = parse_query(text, self.registry, self.bundle.synonyms)
        return self._run_query(q)

    def share(self, condition: str, mode: str = "release") -> ResultSet:
        q = Query("share", condition.strip(), "condition", text=f"share {condition}")
        return self._run_query(q, share_mode=mode)

    def _run_query(self, q: Query, share_mode: str = "release") -> ResultSet:
        with self._lock:
            resolved_table: Optional[str] = None
            if q.kind == "aggregate":
                rs, resolved_table = self._execute_aggregate(q)
            elif q.scope_kind == "condition":
                rs = self._execute_condition(q)
            else:
                rs = self._execute_select(q)
            shape = normalized_shape(q, resolved_table)
            touched = [s.table for s in rs.sections] or ([resolved_table] if resolved_table else [])
            self.policy_store.record_query(shape, touched)
            self._save_patterns()
            self._absorb_learned_policies()
            persist_report = not (q.kind == "share" and share_mode == "preview")
            if persist_report:
                rs.report_id = self._write_report(
                    q.kind, {"kind": q.kind, "query": q.text, **rs.to_json()}
                )
            self._journal(q, rs)
            return rs

    def _execute_aggregate(self, q: Query) -> Tuple[ResultSet, Optional[str]]:
        fn, column = q.aggregate
        table = resolve_aggregate_table(q, self.registry, self.policy_store.storage)
        if table is None or table not in self.registry.tables:
            raise UnrecognizedQuery(f"no table carries column {column}")
        plan = QueryPlan()
        value: Optional[Scalar] = None
        derived_name = find_derived_spec(
            fn, column, table, self.policy_store.storage, self.registry
        )
        served_from_derived = False
        if derived_name is not None:
            rows = self._scan_point_plain(derived_name, "Date", q.month, plan)
            plan.add("index_lookup", table=derived_name, purpose="latest_version")
            if rows:
                value = rows[-1][1].get(column)
                served_from_derived = value is not None
        if not served_from_derived:
            agg_kind = {"avg": "monthly_avg", "max": "monthly_max", "min": "monthly_min"}[fn]
            rows = self._scan_range_plain(
                table, "Date", q.month.first_day(), q.month.last_day(), plan
            )
            col = self._schema(table).column(column)
            value = compute_aggregate(
                agg_kind, column, [r for _, r in rows], col.value_type if col else "integer"
            )
        plan.add("aggregate", fn=fn, column=column, table=table)
        rs = ResultSet(
            status="ok",
            kind="aggregate",
            value=value,
            value_provenance=PROV_AGGREGATE if value is not None else None,
            plan=plan,
        )
        return rs, table

    def _candidate_tables(self, q: Query) -> List[str]:
        if q.scope != "*":
            return [q.scope]
        needed = {f.column for f in q.filters}
        out = []
        for name, schema in sorted(self.registry.tables.items()):
            if schema.is_derived or name == OBJECTS_TABLE:
                continue
            if all(schema.column(c) is not None for c in needed):
                out.append(name)
        return out

    def _execute_select(self, q: Query) -> ResultSet:
        plan = QueryPlan()
        sections = []
        for table in self._candidate_tables(q):
            section = self._select_table(table, list(q.filters), plan)
            if section.rows:
                sections.append(section)
        return ResultSet(status="ok", kind="select", sections=sections, plan=plan)

    def _select_table(
        self, table: str, filters: List[QueryFilter], plan: QueryPlan
    ) -> Section:
        schema = self._schema(table)
        for f in filters:
            if schema.column(f.column) is None:
                raise UnrecognizedQuery(f"{table} has no column {f.column}")
        chosen, rest = choose_store_predicate(filters, schema)
        if chosen is None:
            rows = self._full_scan_plain(table, plan)
        else:
            col = schema.column(chosen.column)
            if chosen.op == "=" and col.encryption == "deterministic":
                rows = self._scan_point_plain(table, chosen.column, chosen.literal, plan)
            else:
                lo: Optional[Scalar]
                hi: Optional[Scalar]
                if chosen.op == "between":
                    lo, hi = chosen.literal, chosen.literal2
                elif chosen.op == "=":
                    lo = hi = chosen.literal
                elif chosen.op in ("<", "<="):
                    lo, hi = None, chosen.literal
                else:
                    lo, hi = chosen.literal, None
                rows = self._scan_range_plain(table, chosen.column, lo, hi, plan)
                if chosen.op in ("<", ">"):
                    rest = [chosen] + rest
        if rest:
            plan.add("local_filter", table=table, filters=[f.column + f.op for f in rest])
            rows = apply_local_filters(rows, rest)
        return self._build_section(table, rows, plan)

    def _build_section(
        self,
        table: str,
        rows: List[Tuple[int, Dict[str, Optional[Scalar]]]],
        plan: QueryPlan,
    ) -> Section:
        schema = self._schema(table)
        policy = next(
            (
                p
                for p in self.policy_store.enrichment
                if p.timing == "process_time" and p.target_table == table
            ),
            None,
        )
        enriched: List[Dict[str, EnrichedBinding]]
        if policy is not None and rows:
            plan.add("enrich", table=table, source=policy.source_table)
            fillable = [
                c for c in self.config.fillable_columns if schema.column(c) is not None
            ]
            skip = {
                (h, c) for (t, h, c) in self._rejected_targets if t == table
            }
            enriched, proposals = extrapolate_at_query(
                table, rows, policy, self._day_rows, fillable, skip
            )
            self._enqueue_proposals(proposals)
        else:
            enriched = [
                {c: EnrichedBinding(c, v) for c, v in row.items()} for _, row in rows
            ]
        out_rows = []
        for (handle, _), cells in zip(rows, enriched):
            row_out = []
            for col in schema.column_names():
                binding = cells.get(col, EnrichedBinding(col, None))
                recorded = self._cell_prov.get((table, handle, col))
                if recorded and binding.provenance == PROV_SOURCE:
                    binding = EnrichedBinding(col, binding.value, recorded)
                row_out.append(binding)
            out_rows.append(row_out)
        return Section(
            table=table,
            columns=schema.column_names(),
            rows=out_rows,
            row_handles=[h for h, _ in rows],
        )

    def _execute_condition(self, q: Query) -> ResultSet:
        condition = q.scope
        plan = QueryPlan()
        lookup = self.policy_store.lookup_sharing(condition)
        plan.add("share_filter", condition=condition)
        if lookup.needs_user_input:
            return ResultSet(status="needs_user_input", kind=q.kind, plan=plan)
        policy = lookup.policy
        included = {_norm(c) for c in policy.included}
        cond_norm = _norm(condition)

        def allowed(value: Optional[Scalar]) -> bool:
            if value is None:
                return True
            v = _norm(value)
            return v == cond_norm or v in included

        sections = []
        manifest: List[ManifestEntry] = []
        released: Set[str] = set()
        for table in sorted(self.registry.tables):
            if _norm(table) not in included or table == OBJECTS_TABLE:
                continue
            rows = self._full_scan_plain(table, plan)
            kept = [(h, r) for h, r in rows if allowed(r.get("Condition"))]
            if not kept:
                continue
            section = self._build_section(table, kept, plan)
            sections.append(section)
            released.add(table)
            for h, r in kept:
                summary = "; ".join(
                    f"{c}={display_scalar(v)}" for c, v in r.items() if v is not None
                )
                manifest.append(ManifestEntry("row", table, str(h), summary))
        objects = []
        for h, r in self._full_scan_plain(OBJECTS_TABLE, plan):
            klass = r.get("ObjectClass")
            if klass is None or _norm(klass) not in included or not allowed(r.get("Condition")):
                continue
            obj = ReleasedObject(
                handle=str(r.get("Handle")),
                object_class=str(klass),
                captured=r.get("Date") if isinstance(r.get("Date"), date) else None,
                condition=str(r["Condition"]) if r.get("Condition") is not None else None,
            )
            objects.append(obj)
            released.add(str(klass))
            manifest.append(
                ManifestEntry("object", str(klass), obj.handle, f"captured {obj.captured}")
            )
        return ResultSet(
            status="ok",
            kind=q.kind,
            sections=sections,
            objects=objects,
            manifest=manifest,
            released_categories=released,
            plan=plan,
        )

    # --- learned policies ------------------------------------------------------------

    def _absorb_learned_policies(self) -> None:
        derived = self.policy_store.derive_storage_policies(self.config.pattern_threshold)
        added = self.policy_store.apply_learned(derived)
        if not added:
            return
        for policy in added:
            if policy.base_table not in self.registry.tables:
                continue  # derived tables appear when base data first arrives
            for spec in policy.derived_tables:
                changed = self.registry.ensure_derived_table(
                    spec.name, policy.base_table, spec.columns
                )
                if changed is not None:
                    self._store_create_table(changed)
                self._recompute_derived(policy.base_table, spec)
        self._save_state()

    def _recompute_derived(self, base_table: str, spec) -> None:
        months: Set[str] = set()
        date_idx = self._indexes.get((base_table, "Date"))
        if date_idx is not None:
            months = {Month.of(v).iso() for v, _ in date_idx.items() if isinstance(v, date)}
        else:
            for _, row in self._full_scan_plain(base_table):
                if isinstance(row.get("Date"), date):
                    months.add(Month.of(row["Date"]).iso())
        schema = self._schema(spec.name)
        for month_iso in sorted(months):
            month = Month.from_iso(month_iso)
            rows = self._month_rows(base_table, month)
            bindings: Dict[str, Scalar] = {"Date": month}
            prov = {}
            for column in spec.columns:
                col = schema.column(column)
                value = compute_aggregate(
                    spec.aggregate, column, rows, col.value_type if col else "integer"
                )
                if value is not None:
                    bindings[column] = value
                    prov[column] = PROV_AGGREGATE
            if len(bindings) == 1:
                continue
            self._ensure_store_table(spec.name)
            handles = self.store.put_rows(
                self._namemap.table_id(spec.name), [self._encrypt_bindings(spec.name, bindings)]
            )
            old = self._derived_live.get((spec.name, month_iso))
            if old is not None:
                self._supersede(spec.name, old)
            self._derived_live[(spec.name, month_iso)] = handles[0]
            self._live.setdefault(spec.name, set()).add(handles[0])
            for column in prov:
                self._cell_prov[(spec.name, handles[0], column)] = PROV_AGGREGATE

    # --- confirmations ------------------------------------------------------------------

    def _enqueue_proposals(self, proposals: Sequence[ExtrapolationProposal]) -> None:
        added = False
        open_targets = {
            (p.table, p.row_handle, p.column) for p in self._pending.values()
        }
        for prop in proposals:
            target = (prop.table, prop.row_handle, prop.column)
            if target in open_targets or target in self._rejected_targets:
                continue
            pid = uuid.uuid4().hex[:12]
            self._pending[pid] = PendingConfirmation(
                proposal_id=pid,
                table=prop.table,
                row_handle=prop.row_handle,
                column=prop.column,
                value=prop.value,
                source_table=prop.source_table,
                source_date=prop.source_date,
                source_time=prop.source_time,
            )
            open_targets.add(target)
            added = True
        if added:
            self._save_state()

    def pending_confirmations(self) -> List[PendingConfirmation]:
        return sorted(self._pending.values(), key=lambda p: p.created_at)

    def confirm_enrichment(self, proposal_id: str, decision: str) -> dict:
        """Accepting persists the proposed cell with extrapolated provenance;
        rejecting leaves the NULL alone and remembers not to re-propose."""
        if decision not in ("accept", "reject"):
            raise VaultError(f"decision must be accept or reject, not {decision!r}")
        with self._lock:
            if proposal_id in self._decided:
                raise AlreadyDecided(f"proposal {proposal_id} already {self._decided[proposal_id]}")
            prop = self._pending.get(proposal_id)
            if prop is None:
                raise UnknownProposal(f"no pending proposal {proposal_id}")
            target = (prop.table, prop.row_handle, prop.column)
            if decision == "reject":
                self._rejected_targets.add(target)
                del self._pending[proposal_id]
                self._decided[proposal_id] = "rejected"
                self._save_state()
                return {"proposal_id": proposal_id, "status": "rejected"}
            rows = [
                (h, r)
                for h, r in self._scan_range_plain(
                    prop.table, "Date", prop.source_date, prop.source_date
                )
                if h == prop.row_handle
            ]
            if not rows:
                raise UnknownProposal(f"target row of proposal {proposal_id} is gone")
            handle, row = rows[0]
            row = dict(row)
            row[prop.column] = prop.value
            bindings = {c: v for c, v in row.items() if v is not None}
            new_handles = self.store.put_rows(
                self._namemap.table_id(prop.table),
                [self._encrypt_bindings(prop.table, bindings)],
            )
            new_handle = new_handles[0]
            # transfer provenance and index entries to the rewritten row
            for (t, h, c), p in list(self._cell_prov.items()):
                if t == prop.table and h == handle:
                    self._cell_prov[(t, new_handle, c)] = p
                    del self._cell_prov[(t, h, c)]
            self._supersede(prop.table, handle)
            self._live.setdefault(prop.table, set()).add(new_handle)
            maintain_indexes(
                self._indexes,
                prop.table,
                [(new_handle, row)],
                self.policy_store.index_specs(),
            )
            self._cell_prov[(prop.table, new_handle, prop.column)] = PROV_EXTRAPOLATED
            del self._pending[proposal_id]
            self._decided[proposal_id] = "accepted"
            self._save_state()
            return {
                "proposal_id": proposal_id,
                "status": "accepted",
                "table": prop.table,
                "new_row_handle": new_handle,
            }

    # --- reports, journal, audits ----------------------------------------------------------

    def _write_report(self, kind: str, payload: dict) -> str:
        report_id = uuid.uuid4().hex[:16]
        payload = {
            "report_id": report_id,
            "created_at": datetime.now(timezone.utc).isoformat(),
            **payload,
        }
        (self.vault_dir / "reports" / f"{report_id}.json").write_text(
            json.dumps(payload, indent=2)
        )
        return report_id

    def get_report(self, report_id: str) -> Optional[dict]:
        path = self.vault_dir / "reports" / f"{report_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def _journal(self, q: Query, rs: ResultSet) -> None:
        entry = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "kind": q.kind,
            "text": q.text,
            "status": rs.status,
            "report_id": rs.report_id,
        }
        with open(self.vault_dir / "journal.jsonl", "a") as fh:
            fh.write(json.dumps(entry) + "\n")

    def journal_entries(self) -> List[dict]:
        path = self.vault_dir / "journal.jsonl"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]

    def get_object_bytes(self, handle: str) -> bytes:
        """Decrypt a stored binary back to its original payload."""
        obj = self.store.get_object(handle)
        key = self._key(OBJECTS_TABLE, _OBJECT_PAYLOAD_COLUMN)
        return crypto.opaque_decrypt(key, obj.payload)

    def dump_store_log(self) -> List[LogEntry]:
        return self.store.dump_log()

    def audit_leakage(self, sentinels: Sequence[bytes]) -> List[dict]:
        """Scan every byte the store ever received for sentinel plaintext."""
        matches = []
        for entry in self.dump_store_log():
            for s in sentinels:
                if s and s in entry.raw:
                    matches.append(
                        {"kind": entry.kind, "ts_micros": entry.ts_micros, "sentinel": s.decode("utf-8", "replace")}
                    )
        return matches

    # --- oracle comparison -------------------------------------------------------------------

    def build_reference(self) -> PlainReferenceEngine:
        """Decrypt the whole vault into the naive plaintext engine."""
        ref = PlainReferenceEngine(self.config.fillable_columns)
        for name, schema in self.registry.tables.items():
            if schema.is_derived:
                continue
            if name == OBJECTS_TABLE:
                for _, row in self._full_scan_plain(name):
                    ref.add_object(
                        PlainObject(
                            handle=str(row.get("Handle")),
                            object_class=str(row.get("ObjectClass")),
                            captured=row.get("Date") if isinstance(row.get("Date"), date) else None,
                            condition=str(row["Condition"]) if row.get("Condition") is not None else None,
                        )
                    )
                continue
            for handle, row in self._full_scan_plain(name):
                prov = {
                    c: p
                    for (t, h, c), p in self._cell_prov.items()
                    if t == name and h == handle
                }
                ref.add_row(name, row, provenance=prov or None)
        return ref

    def oracle_diff(self, queries: Sequence[str]) -> dict:
        """Run each query through the encrypted path and the plaintext
        reference; report any result that differs."""
        ref = self.build_reference()
        mismatches = []
        for text in queries:
            q = parse_query(text, self.registry, self.bundle.synonyms)
            rs = self._run_query(q)
            expected = reference_answer(ref, q, self.policy_store, self.config)
            got = canonical_result(rs)
            if got != expected:
                mismatches.append({"query": text, "encrypted": got, "reference": expected})
        return {"total": len(queries), "mismatches": mismatches}


# --- oracle canonical forms ---------------------------------------------------------

def _canon_row(cells: Sequence[Tuple[str, Optional[Scalar], str]]) -> tuple:
    return tuple(
        sorted((c, display_scalar(v), prov) for c, v, prov in cells if v is not None)
    )


def canonical_result(rs: ResultSet) -> tuple:
    if rs.kind == "aggregate":
        return ("agg", display_scalar(rs.value) if rs.value is not None else None)
    sections = tuple(
        sorted(
            (
                s.table,
                tuple(
                    sorted(
                        _canon_row([(b.attribute, b.value, b.provenance) for b in row])
                        for row in s.rows
                    )
                ),
            )
            for s in rs.sections
        )
    )
    objects = tuple(
        sorted(
            (o.object_class, o.captured.isoformat() if o.captured else None, o.condition or "")
            for o in rs.objects
        )
    )
    return ("rows", rs.status, sections, objects)


def reference_answer(
    ref: PlainReferenceEngine, q: Query, policy_store: PolicyStore, config: VaultConfig
) -> tuple:
    if q.kind == "aggregate":
        fn, column = q.aggregate
        table = q.scope
        if table == "*":
            # mirror the planner's base-table resolution on the reference side
            backed = sorted(
                p.base_table
                for p in policy_store.storage
                for spec in p.derived_tables
                if spec.aggregate == {"avg": "monthly_avg", "max": "monthly_max", "min": "monthly_min"}[fn]
                and column in spec.columns
            )
            candidates = ref.tables_with_column(column)
            table = next((b for b in backed if b in candidates), None)
            if table is None and candidates:
                table = min(candidates, key=lambda t: (len(_ref_columns(ref, t)), t))
        if table is None:
            return ("agg", None)
        value = ref.aggregate(fn, column, table, q.month)
        return ("agg", display_scalar(value) if value is not None else None)

    if q.scope_kind == "condition":
        lookup = policy_store.lookup_sharing(q.scope)
        if lookup.needs_user_input:
            return ("rows", "needs_user_input", (), ())
        rows_by_table, objects = ref.gather_condition(q.scope, lookup.policy)
        process_sources = {
            p.target_table: p.source_table
            for p in policy_store.enrichment
            if p.timing == "process_time"
        }
        sections = []
        for table, rows in sorted(rows_by_table.items()):
            canon_rows = _ref_rows_canon(ref, table, rows, process_sources, config)
            sections.append((table, tuple(sorted(canon_rows))))
        objs = tuple(
            sorted(
                (o.object_class, o.captured.isoformat() if o.captured else None, o.condition or "")
                for o in objects
            )
        )
        return ("rows", "ok", tuple(sorted(sections)), objs)

    # plain select
    filters = [(f.column, f.op, f.literal, f.literal2) for f in q.filters]
    tables = [q.scope] if q.scope != "*" else [
        t for t in sorted(ref.tables) if all(any(f[0] in r for r in ref.tables[t]) for f in filters)
    ]
    process_sources = {
        p.target_table: p.source_table
        for p in policy_store.enrichment
        if p.timing == "process_time"
    }
    sections = []
    for table in tables:
        rows = ref.select(table, filters)
        if not rows:
            continue
        canon_rows = _ref_rows_canon(ref, table, rows, process_sources, config)
        sections.append((table, tuple(sorted(canon_rows))))
    return ("rows", "ok", tuple(sorted(sections)), ())


def _ref_columns(ref: PlainReferenceEngine, table: str) -> List[str]:
    cols: Set[str] = set()
    for row in ref.tables.get(table, []):
        cols.update(row.keys())
    return sorted(cols)


def _ref_rows_canon(ref, table, rows, process_sources, config) -> List[tuple]:
    if table in process_sources:
        filled = ref.extrapolate(rows, process_sources[table])
        return [
            _canon_row([(c, v, prov) for c, (v, prov) in row.items()]) for row in filled
        ]
    return [
        _canon_row([(c, v, ref.prov_for(row, c)) for c, v in row.items()]) for row in rows
    ]
