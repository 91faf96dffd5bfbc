"""Schema management: table registry, entity resolution, and schema tags.

A tag set finds its table through its keyword signature. Exact configured
signatures bind first; a signature that is a subset of an existing table's
columns reuses that table with NULLs for the missing columns; a signature
that strictly extends an existing table's signature is a conflict surfaced
to the user rather than a silent widening. Anything else gets a fresh
auto-named table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .errors import SchemaConflict
from .parser import MetadataTag, MetadataTagSet, normalize_keyword
from .values import Month, Scalar, coerce

VALUE_TYPES = ("date", "month", "integer", "decimal", "text")
ENCRYPTION_CLASSES = ("deterministic", "order_preserving", "opaque")

# text columns that appear in equality predicates and so stay point-scannable
EQUALITY_COLUMNS = frozenset({"Doctor", "Facility", "Condition", "ObjectClass", "Medication"})


@dataclass(frozen=True)
class Column:
    name: str
    value_type: str
    encryption: str

    def __post_init__(self) -> None:
        if self.value_type not in VALUE_TYPES:
            raise ValueError(f"bad value type: {self.value_type}")
        if self.encryption not in ENCRYPTION_CLASSES:
            raise ValueError(f"bad encryption class: {self.encryption}")


@dataclass
class TableSchema:
    table_name: str
    columns: List[Column]
    is_derived: bool = False
    provenance_enabled: bool = False
    source_table: Optional[str] = None
    signature: FrozenSet[str] = frozenset()

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(names) != len(set(names)):
            raise SchemaConflict(f"{self.table_name}: duplicate column names")

    def column(self, name: str) -> Optional[Column]:
        for c in self.columns:
            if c.name == name:
                return c
        return None

    def column_names(self) -> List[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class SchemaTag:
    table_name: str
    bindings: Tuple[Tuple[str, Scalar], ...]

    def get(self, attribute: str) -> Optional[Scalar]:
        for attr, value in self.bindings:
            if attr == attribute:
                return value
        return None

    def as_dict(self) -> Dict[str, Scalar]:
        return dict(self.bindings)


def default_encryption(column_name: str, value_type: str) -> str:
    """Scheme assignment: equality-predicate columns deterministic, ordered
    scalars order-preserving, everything else opaque."""
    if value_type == "month":
        return "deterministic"
    if value_type in ("date", "integer", "decimal"):
        return "order_preserving"
    if column_name in EQUALITY_COLUMNS:
        return "deterministic"
    return "opaque"


def value_type_of(value: Scalar) -> str:
    if isinstance(value, Month):
        return "month"
    if isinstance(value, date):
        return "date"
    if isinstance(value, bool):
        return "text"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, Decimal):
        return "decimal"
    return "text"


# --- synonym dictionary --------------------------------------------------------

class SynonymDictionary:
    """Surface form to canonical keyword map; canonical forms are fixed points."""

    def __init__(self, entries: Optional[Dict[str, str]] = None) -> None:
        self._entries: Dict[str, str] = {}
        for surface, canonical in (entries or {}).items():
            self.add(surface, canonical)
        self._validate()

    def add(self, surface: str, canonical: str) -> None:
        self._entries[normalize_keyword(surface)] = canonical.strip()

    def resolve(self, keyword: str) -> str:
        return self._entries.get(normalize_keyword(keyword), keyword)

    def _validate(self) -> None:
        for canonical in self._entries.values():
            resolved = self.resolve(canonical)
            if resolved != canonical:
                raise ValueError(f"canonical form {canonical!r} is not a fixed point")

    def items(self) -> List[Tuple[str, str]]:
        return sorted(self._entries.items())

    @classmethod
    def from_file(cls, path: Path) -> "SynonymDictionary":
        entries = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            surface, _, canonical = line.partition("=")
            if not canonical:
                raise ValueError(f"bad synonym line: {line!r}")
            entries[surface.strip()] = canonical.strip()
        return cls(entries)

    def to_file(self, path: Path) -> None:
        lines = [f"{s}={c}" for s, c in self.items()]
        Path(path).write_text("\n".join(lines) + "\n")


def resolve_entities(tags: MetadataTagSet, synonyms: SynonymDictionary) -> MetadataTagSet:
    """Canonicalize keywords; values pass through untouched."""
    resolved = tuple(
        MetadataTag(synonyms.resolve(t.keyword), t.value, t.observed_at) for t in tags.tags
    )
    return MetadataTagSet(tags.doc_id, resolved)


# --- registry -------------------------------------------------------------------

@dataclass(frozen=True)
class TableConfig:
    """A named table from configuration: its binding signature and columns."""

    name: str
    signature: FrozenSet[str]
    columns: Tuple[Column, ...]


def _auto_table_name(signature: FrozenSet[str]) -> str:
    parts = []
    for kw in sorted(signature):
        cleaned = re.sub(r"[^A-Za-z0-9]+", " ", kw).strip()
        parts.extend(w.capitalize() for w in cleaned.split())
    return "Tbl_" + "_".join(parts) if parts else "Tbl_Unnamed"


class SchemaRegistry:
    """All known tables plus the configured name bindings."""

    def __init__(self, configs: Sequence[TableConfig] = ()) -> None:
        self.tables: Dict[str, TableSchema] = {}
        self._configs: Dict[FrozenSet[str], TableConfig] = {c.signature: c for c in configs}
        self._configs_by_name: Dict[str, TableConfig] = {c.name: c for c in configs}

    # routing ------------------------------------------------------------------

    def route(self, signature: FrozenSet[str]) -> Optional[str]:
        """Table name for a signature, or None when a new table is needed.
        Priority: exact configured signature, existing table covering the
        signature, configured table covering it. Raises SchemaConflict when
        the signature would widen an existing table."""
        config = self._configs.get(signature)
        if config is not None:
            existing = self.tables.get(config.name)
            if existing is not None and not signature <= set(existing.column_names()):
                raise SchemaConflict(
                    f"{config.name}: configured signature no longer fits existing columns"
                )
            return config.name
        # system tables (empty signature) and derived tables never bind uploads
        candidates = [
            t
            for t in self.tables.values()
            if not t.is_derived and t.signature and signature <= set(t.column_names())
        ]
        if candidates:
            candidates.sort(key=lambda t: (len(t.columns) - len(signature), t.table_name))
            return candidates[0].table_name
        config_candidates = [
            c
            for c in self._configs.values()
            if c.name not in self.tables and signature <= {col.name for col in c.columns}
        ]
        if config_candidates:
            config_candidates.sort(key=lambda c: (len(c.columns) - len(signature), c.name))
            return config_candidates[0].name
        for t in self.tables.values():
            if not t.is_derived and t.signature and t.signature < signature:
                raise SchemaConflict(
                    f"upload adds columns {sorted(signature - t.signature)} to table "
                    f"{t.table_name}; review required"
                )
        return None

    def ensure_base_table(self, tag_set: MetadataTagSet) -> Tuple[str, Optional[TableSchema]]:
        """Return (table_name, created_schema_or_None) for a tag set."""
        signature = frozenset(t.keyword for t in tag_set.tags)
        name = self.route(signature)
        if name is not None and name in self.tables:
            return name, None
        if name is not None:
            schema = self._from_config(self._configs_by_name[name])
        else:
            schema = self._auto_schema(signature, tag_set)
        self.tables[schema.table_name] = schema
        return schema.table_name, schema

    def _from_config(self, config: TableConfig) -> TableSchema:
        return TableSchema(
            table_name=config.name,
            columns=list(config.columns),
            signature=config.signature,
        )

    def _auto_schema(self, signature: FrozenSet[str], tag_set: MetadataTagSet) -> TableSchema:
        name = _auto_table_name(signature)
        if name in self.tables:
            raise SchemaConflict(f"{name}: auto-named table exists with other columns")
        columns = []
        seen = set()
        for tag in tag_set.tags:
            if tag.keyword in seen:
                continue
            seen.add(tag.keyword)
            vt = value_type_of(tag.value)
            columns.append(Column(tag.keyword, vt, default_encryption(tag.keyword, vt)))
        return TableSchema(table_name=name, columns=columns, signature=signature)

    def ensure_derived_table(
        self, name: str, base: str, agg_columns: Sequence[str]
    ) -> Optional[TableSchema]:
        """Create or widen a derived table; returns the schema when changed."""
        base_schema = self.tables[base]
        wanted = [Column("Date", "month", "deterministic")]
        for col in agg_columns:
            base_col = base_schema.column(col)
            vt = base_col.value_type if base_col else "integer"
            wanted.append(Column(col, vt, "opaque"))
        existing = self.tables.get(name)
        if existing is None:
            schema = TableSchema(
                table_name=name,
                columns=wanted,
                is_derived=True,
                provenance_enabled=True,
                source_table=base,
            )
            self.tables[name] = schema
            return schema
        changed = False
        for col in wanted:
            if existing.column(col.name) is None:
                existing.columns.append(col)
                changed = True
        return existing if changed else None

    # persistence ----------------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "tables": [
                {
                    "name": t.table_name,
                    "columns": [[c.name, c.value_type, c.encryption] for c in t.columns],
                    "is_derived": t.is_derived,
                    "provenance_enabled": t.provenance_enabled,
                    "source_table": t.source_table,
                    "signature": sorted(t.signature),
                }
                for t in self.tables.values()
            ]
        }

    def load_json(self, data: dict) -> None:
        for t in data.get("tables", []):
            schema = TableSchema(
                table_name=t["name"],
                columns=[Column(*c) for c in t["columns"]],
                is_derived=t["is_derived"],
                provenance_enabled=t["provenance_enabled"],
                source_table=t.get("source_table"),
                signature=frozenset(t.get("signature", [])),
            )
            self.tables[schema.table_name] = schema


# --- tag placement ---------------------------------------------------------------

def ensure_tables(
    tag_set: MetadataTagSet,
    storage_policies: Sequence,
    registry: SchemaRegistry,
) -> List[TableSchema]:
    """Create the base table for the tag set plus every derived table a
    matching storage policy demands. Idempotent; returns created/changed schemas."""
    created: List[TableSchema] = []
    base_name, created_base = registry.ensure_base_table(tag_set)
    if created_base is not None:
        created.append(created_base)
    for policy in storage_policies:
        if policy.base_table != base_name:
            continue
        for spec in policy.derived_tables:
            changed = registry.ensure_derived_table(spec.name, base_name, spec.columns)
            if changed is not None:
                created.append(changed)
    return created


def make_schema_tags(
    tag_set: MetadataTagSet,
    registry: SchemaRegistry,
    storage_policies: Sequence,
) -> List[SchemaTag]:
    """Address a tag set to its base table and to every derived table fed by
    that base. Derived tags carry the raw incoming values; the enricher
    replaces them with computed aggregates before anything is persisted.
    Dates bound for monthly tables are truncated to the calendar month."""
    signature = frozenset(t.keyword for t in tag_set.tags)
    base_name = registry.route(signature)
    if base_name is None or base_name not in registry.tables:
        raise SchemaConflict(f"no table for signature {sorted(signature)}; run ensure_tables first")
    base_schema = registry.tables[base_name]
    bindings: Dict[str, Scalar] = {}
    for tag in tag_set.tags:
        col = base_schema.column(tag.keyword)
        if col is None:
            continue
        bindings[tag.keyword] = coerce(tag.value, col.value_type)
    tags = [SchemaTag(base_name, tuple(bindings.items()))]
    row_date = bindings.get("Date")
    for policy in storage_policies:
        if policy.base_table != base_name:
            continue
        for spec in policy.derived_tables:
            if spec.name not in registry.tables or not isinstance(row_date, date):
                continue
            derived = [("Date", Month.of(row_date))]
            has_value = False
            for col in spec.columns:
                if col in bindings:
                    derived.append((col, bindings[col]))
                    has_value = True
            if has_value:
                tags.append(SchemaTag(spec.name, tuple(derived)))
    return tags
