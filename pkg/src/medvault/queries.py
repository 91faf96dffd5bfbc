"""Query parsing, planning, and execution against the encrypted store.

Queries arrive as a small closed set of templates (documented in
docs/QUERIES.md): monthly aggregates, records from a doctor or facility,
records in a date range, records about a condition, share requests, and a
structured select form. Plans push at most one predicate to the store as
ciphertext (point scan on a deterministic column or range scan on an
order-preserving one); everything else is filtered locally after
decryption. When a derived monthly table can answer an aggregate it is
preferred over scanning the base table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .enrichment import (
    PROV_AGGREGATE,
    PROV_SOURCE,
    EnrichedBinding,
    extrapolate_at_query,
)
from .errors import UnrecognizedQuery
from .policies import aggregate_shape
from .records import Ciphertext
from .schema import SchemaRegistry, SynonymDictionary
from .values import Month, Scalar, display_scalar, parse_month, parse_scalar, scalar_to_json

OBJECTS_TABLE = "Objects"

TEMPLATES = (
    "what was my <max|min|average> <column> in <month year>",
    "records from <doctor|facility> <name>",
    "records from <date> to <date>",
    "records about <condition>",
    "share <condition>",
    "select <Table> [where <Column> <op> <value> [and ...]]",
    "aggregate <max|min|avg> <Column> [over <Table>] in <YYYY-MM>",
)


@dataclass(frozen=True)
class QueryFilter:
    column: str
    op: str  # = < <= > >= between
    literal: Scalar
    literal2: Optional[Scalar] = None


@dataclass(frozen=True)
class Query:
    kind: str  # select | aggregate | share
    scope: str  # table name, "*" for all base tables, or a condition label
    scope_kind: str  # "table" | "condition"
    filters: Tuple[QueryFilter, ...] = ()
    aggregate: Optional[Tuple[str, str]] = None  # (fn, column)
    month: Optional[Month] = None
    text: str = ""

    def __post_init__(self) -> None:
        if self.kind == "share":
            if self.scope_kind != "condition" or self.aggregate is not None:
                raise ValueError("share queries carry a condition and no aggregate")


@dataclass
class PlanStep:
    kind: str  # index_lookup | store_point_scan | store_range_scan | local_filter | enrich | aggregate | share_filter
    params: dict = field(default_factory=dict)


@dataclass
class QueryPlan:
    steps: List[PlanStep] = field(default_factory=list)
    encrypted_literals: List[Ciphertext] = field(default_factory=list)

    def add(self, kind: str, **params) -> PlanStep:
        step = PlanStep(kind, params)
        self.steps.append(step)
        return step

    def has(self, kind: str, **params) -> bool:
        return any(
            s.kind == kind and all(s.params.get(k) == v for k, v in params.items())
            for s in self.steps
        )


@dataclass
class Section:
    table: str
    columns: List[str]
    rows: List[List[EnrichedBinding]]
    row_handles: List[int]


@dataclass(frozen=True)
class ReleasedObject:
    handle: str
    object_class: str
    captured: Optional[date]
    condition: Optional[str]


@dataclass(frozen=True)
class ManifestEntry:
    kind: str  # "row" | "object"
    category: str
    identifier: str
    summary: str


@dataclass
class ResultSet:
    status: str  # "ok" | "needs_user_input"
    kind: str
    sections: List[Section] = field(default_factory=list)
    value: Optional[Scalar] = None
    value_provenance: Optional[str] = None
    objects: List[ReleasedObject] = field(default_factory=list)
    manifest: List[ManifestEntry] = field(default_factory=list)
    released_categories: Set[str] = field(default_factory=set)
    plan: QueryPlan = field(default_factory=QueryPlan)
    report_id: Optional[str] = None

    def extrapolated_cells(self) -> List[Tuple[str, int, str]]:
        """(table, row index, column) of every system-populated cell."""
        out = []
        for section in self.sections:
            for i, row in enumerate(section.rows):
                for cell in row:
                    if cell.provenance == "extrapolated":
                        out.append((section.table, i, cell.attribute))
        return out

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "kind": self.kind,
            "value": scalar_to_json(self.value),
            "value_provenance": self.value_provenance,
            "sections": [
                {
                    "table": s.table,
                    "columns": s.columns,
                    "rows": [
                        [
                            {
                                "attribute": c.attribute,
                                "value": scalar_to_json(c.value),
                                "display": display_scalar(c.value),
                                "provenance": c.provenance,
                            }
                            for c in row
                        ]
                        for row in s.rows
                    ],
                }
                for s in self.sections
            ],
            "objects": [
                {
                    "handle": o.handle,
                    "object_class": o.object_class,
                    "captured": o.captured.isoformat() if o.captured else None,
                    "condition": o.condition,
                }
                for o in self.objects
            ],
            "manifest": [
                {
                    "kind": m.kind,
                    "category": m.category,
                    "identifier": m.identifier,
                    "summary": m.summary,
                }
                for m in self.manifest
            ],
            "released_categories": sorted(self.released_categories),
            "report_id": self.report_id,
        }


# --- parsing -----------------------------------------------------------------------

_AGG_WORDS = {
    "max": "max",
    "maximum": "max",
    "highest": "max",
    "min": "min",
    "minimum": "min",
    "lowest": "min",
    "avg": "avg",
    "average": "avg",
    "mean": "avg",
}

_SELECT_RE = re.compile(r"^select\s+([A-Za-z_]\w*)(?:\s+where\s+(.+))?$", re.I)
_STRUCT_AGG_RE = re.compile(
    r"^aggregate\s+(max|min|avg)\s+(.+?)(?:\s+over\s+([A-Za-z_]\w*))?\s+in\s+(.+)$", re.I
)
_PLAIN_AGG_RE = re.compile(
    r"^(?:what\s+(?:was|is)\s+)?(?:my\s+)?(maximum|minimum|average|highest|lowest|mean|max|min|avg)"
    r"\s+(.+?)\s+in\s+(.+?)\s*\??$",
    re.I,
)
_FROM_RE = re.compile(r"^(?:retrieve\s+|show\s+)?records\s+from\s+(doctor|facility)\s+(.+)$", re.I)
_RANGE_RE = re.compile(
    r"^(?:retrieve\s+|show\s+)?records\s+(?:from|between)\s+(.+?)\s+(?:to|and)\s+(.+)$", re.I
)
_COND_RE = re.compile(r"^(?:retrieve\s+|show\s+)?records\s+(?:about|on\s+to|on|for)\s+(.+)$", re.I)
_SHARE_RE = re.compile(r"^share(?:\s+records)?(?:\s+for|\s+about|\s+on)?\s+(.+)$", re.I)
_WHERE_RE = re.compile(r"^(.+?)\s+(=|<=|>=|<|>)\s+(.+)$")
_BETWEEN_RE = re.compile(r"^(.+?)\s+between\s+(.+?)\s+and\s+(.+)$", re.I)

_MONTH_FORMATS = ("%B %Y", "%b %Y", "%B, %Y")


def parse_month_text(text: str) -> Optional[Month]:
    text = text.strip().rstrip("?").strip()
    m = parse_month(text)
    if m is not None:
        return m
    for fmt in _MONTH_FORMATS:
        try:
            dt = datetime.strptime(text.title(), fmt)
            return Month(dt.year, dt.month)
        except ValueError:
            continue
    return None


def _resolve_column(
    surface: str, registry: SchemaRegistry, synonyms: SynonymDictionary
) -> Optional[str]:
    wanted = synonyms.resolve(surface.strip())
    norm = re.sub(r"\s+", " ", wanted.strip()).lower()
    for table in registry.tables.values():
        for col in table.columns:
            if col.name.lower() == norm:
                return col.name
    return None


def _parse_literal(text: str) -> Scalar:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    return parse_scalar(text)


def parse_query(
    text: str, registry: SchemaRegistry, synonyms: SynonymDictionary
) -> Query:
    """Map template text to a Query; anything else raises UnrecognizedQuery
    carrying the supported template list."""
    raw = text.strip()
    stripped = re.sub(r"\s+", " ", raw)

    m = _SELECT_RE.match(stripped)
    if m:
        table = m.group(1)
        if table not in registry.tables:
            raise UnrecognizedQuery(f"unknown table: {table}")
        filters = _parse_where(m.group(2), registry, synonyms) if m.group(2) else ()
        return Query("select", table, "table", tuple(filters), text=raw)

    m = _STRUCT_AGG_RE.match(stripped)
    if m:
        fn = m.group(1).lower()
        column = _resolve_column(m.group(2), registry, synonyms)
        month = parse_month_text(m.group(4))
        if column is None or month is None:
            raise UnrecognizedQuery(_help(f"cannot resolve {m.group(2)!r} in {m.group(4)!r}"))
        scope = m.group(3) or "*"
        if scope != "*" and scope not in registry.tables:
            raise UnrecognizedQuery(f"unknown table: {scope}")
        return Query("aggregate", scope, "table", aggregate=(fn, column), month=month, text=raw)

    m = _PLAIN_AGG_RE.match(stripped)
    if m:
        column = _resolve_column(m.group(2), registry, synonyms)
        month = parse_month_text(m.group(3))
        if column is not None and month is not None:
            fn = _AGG_WORDS[m.group(1).lower()]
            return Query("aggregate", "*", "table", aggregate=(fn, column), month=month, text=raw)

    m = _FROM_RE.match(stripped)
    if m:
        column = "Doctor" if m.group(1).lower() == "doctor" else "Facility"
        name = m.group(2).strip().rstrip("?").strip()
        return Query(
            "select", "*", "table", (QueryFilter(column, "=", name),), text=raw
        )

    m = _RANGE_RE.match(stripped)
    if m:
        from .values import parse_date

        lo, hi = parse_date(m.group(1)), parse_date(m.group(2))
        if lo is not None and hi is not None:
            return Query(
                "select",
                "*",
                "table",
                (QueryFilter("Date", "between", lo, hi),),
                text=raw,
            )

    m = _SHARE_RE.match(stripped)
    if m:
        return Query("share", m.group(1).strip().strip("'\""), "condition", text=raw)

    m = _COND_RE.match(stripped)
    if m:
        return Query("select", m.group(1).strip().strip("'\""), "condition", text=raw)

    raise UnrecognizedQuery(_help(f"unrecognized query: {raw!r}"))


def _help(prefix: str) -> str:
    joined = "\n  ".join(TEMPLATES)
    return f"{prefix}\nsupported templates:\n  {joined}"


def _split_clauses(clause: str) -> List[str]:
    """Split on ' and ' while keeping 'between A and B' in one piece."""
    parts = re.split(r"\s+and\s+", clause, flags=re.I)
    merged: List[str] = []
    for part in parts:
        if merged and re.search(r"\bbetween\b", merged[-1], re.I) and not _BETWEEN_RE.match(
            merged[-1]
        ):
            merged[-1] += " and " + part
        else:
            merged.append(part)
    return merged


def _parse_where(
    clause: str, registry: SchemaRegistry, synonyms: SynonymDictionary
) -> List[QueryFilter]:
    filters = []
    for part in _split_clauses(clause):
        part = part.strip()
        b = _BETWEEN_RE.match(part)
        if b:
            column = _resolve_column(b.group(1), registry, synonyms)
            if column is None:
                raise UnrecognizedQuery(f"unknown column: {b.group(1)!r}")
            filters.append(
                QueryFilter(column, "between", _parse_literal(b.group(2)), _parse_literal(b.group(3)))
            )
            continue
        w = _WHERE_RE.match(part)
        if not w:
            raise UnrecognizedQuery(_help(f"bad filter: {part!r}"))
        column = _resolve_column(w.group(1), registry, synonyms)
        if column is None:
            raise UnrecognizedQuery(f"unknown column: {w.group(1)!r}")
        filters.append(QueryFilter(column, w.group(2), _parse_literal(w.group(3))))
    # between pairs must come pre-sorted
    for f in filters:
        if f.op == "between" and f.literal2 is not None and f.literal > f.literal2:
            raise UnrecognizedQuery("between bounds out of order")
    return filters


def normalized_shape(q: Query, resolved_table: Optional[str]) -> str:
    if q.kind == "aggregate" and q.aggregate:
        fn, column = q.aggregate
        return aggregate_shape(fn, column, resolved_table or q.scope)
    if q.kind == "share":
        return "share:condition"
    if q.scope_kind == "condition":
        return "select:condition"
    ops = ",".join(sorted(f"{f.column}{f.op}" for f in q.filters))
    return f"select:{resolved_table or q.scope}:{ops}"


def resolve_aggregate_table(
    q: Query, registry: SchemaRegistry, storage_policies: Sequence
) -> Optional[str]:
    """Base table for an aggregate: the explicit scope if given, else the
    table backing a matching derived spec, else the smallest base table
    carrying the column (alphabetical tiebreak)."""
    fn, column = q.aggregate
    if q.scope != "*":
        return q.scope
    agg_kind = {"avg": "monthly_avg", "max": "monthly_max", "min": "monthly_min"}[fn]
    backed = sorted(
        p.base_table
        for p in storage_policies
        for spec in p.derived_tables
        if spec.aggregate == agg_kind and column in spec.columns
    )
    candidates = [
        t
        for t in registry.tables.values()
        if not t.is_derived and t.table_name != OBJECTS_TABLE and t.column(column) is not None
    ]
    if not candidates:
        return None
    for base in backed:
        if any(t.table_name == base for t in candidates):
            return base
    candidates.sort(key=lambda t: (len(t.columns), t.table_name))
    return candidates[0].table_name


def find_derived_spec(
    fn: str, column: str, base_table: str, storage_policies: Sequence, registry: SchemaRegistry
) -> Optional[str]:
    """Name of an existing derived table answering (fn, column) over base_table."""
    agg_kind = {"avg": "monthly_avg", "max": "monthly_max", "min": "monthly_min"}[fn]
    for policy in storage_policies:
        if policy.base_table != base_table:
            continue
        for spec in policy.derived_tables:
            if spec.aggregate == agg_kind and column in spec.columns:
                if spec.name in registry.tables:
                    return spec.name
    return None


def choose_store_predicate(
    filters: Sequence[QueryFilter], table_schema
) -> Tuple[Optional[QueryFilter], List[QueryFilter]]:
    """Pick the single filter pushed to the store; the rest run locally.
    Equality on a deterministic column wins, then any comparison on an
    order-preserving column."""
    chosen = None
    for f in filters:
        col = table_schema.column(f.column)
        if col is None:
            continue
        if f.op == "=" and col.encryption == "deterministic":
            chosen = f
            break
    if chosen is None:
        for f in filters:
            col = table_schema.column(f.column)
            if col is None:
                continue
            if col.encryption == "order_preserving" and f.op in ("<", "<=", ">", ">=", "between", "="):
                chosen = f
                break
    rest = [f for f in filters if f is not chosen]
    return chosen, rest


def apply_local_filters(
    rows: Sequence[Tuple[int, Dict[str, Optional[Scalar]]]],
    filters: Sequence[QueryFilter],
) -> List[Tuple[int, Dict[str, Optional[Scalar]]]]:
    out = []
    for handle, row in rows:
        ok = True
        for f in filters:
            value = row.get(f.column)
            if value is None:
                ok = False
                break
            if f.op == "=" and value != f.literal:
                ok = False
            elif f.op == "<" and not value < f.literal:
                ok = False
            elif f.op == "<=" and not value <= f.literal:
                ok = False
            elif f.op == ">" and not value > f.literal:
                ok = False
            elif f.op == ">=" and not value >= f.literal:
                ok = False
            elif f.op == "between" and not (f.literal <= value <= f.literal2):
                ok = False
            if not ok:
                break
        if ok:
            out.append((handle, row))
    return out
