"""Data enrichment: ingest-time aggregate fill, query-time extrapolation,
and the trusted-side indexes that keep both fast.

Derived monthly values are recomputed from every base row of the affected
month on each ingest, so they are always exact. Query-time extrapolation
only ever fills NULL cells, copies from a same-calendar-day source row
(temporally nearest when the rows carry times), and marks every filled
cell so it can never be mistaken for source data.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from datetime import date, datetime
from decimal import ROUND_HALF_UP, Decimal
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .policies import EnrichmentPolicy, StoragePolicy
from .schema import SchemaRegistry, SchemaTag
from .values import Month, Scalar, combine_date_time, scalar_from_json, scalar_to_json

PROV_SOURCE = "source"
PROV_AGGREGATE = "computed_aggregate"
PROV_EXTRAPOLATED = "extrapolated"


@dataclass(frozen=True)
class EnrichedBinding:
    attribute: str
    value: Optional[Scalar]
    provenance: str = PROV_SOURCE


# --- local indexes -------------------------------------------------------------

class LocalIndex:
    """Ordered map from plaintext value to row handles for one column.
    Lives only in vault state; never serialized toward the store."""

    def __init__(self, table: str, column: str) -> None:
        self.table = table
        self.column = column
        self._keys: List[Scalar] = []
        self._handles: Dict[Scalar, Set[int]] = {}
        self._value_of: Dict[int, Scalar] = {}

    def __len__(self) -> int:
        return len(self._value_of)

    def add(self, value: Scalar, handle: int) -> None:
        if value not in self._handles:
            bisect.insort(self._keys, value)
            self._handles[value] = set()
        self._handles[value].add(handle)
        self._value_of[handle] = value

    def remove_handle(self, handle: int) -> None:
        value = self._value_of.pop(handle, None)
        if value is None:
            return
        bucket = self._handles.get(value)
        if bucket is not None:
            bucket.discard(handle)
            if not bucket:
                del self._handles[value]
                i = bisect.bisect_left(self._keys, value)
                if i < len(self._keys) and self._keys[i] == value:
                    del self._keys[i]

    def lookup(self, value: Scalar) -> Set[int]:
        return set(self._handles.get(value, ()))

    def range(self, lo: Scalar, hi: Scalar) -> List[int]:
        """Handles for values in [lo, hi], in value order."""
        out: List[int] = []
        i = bisect.bisect_left(self._keys, lo)
        while i < len(self._keys) and self._keys[i] <= hi:
            out.extend(sorted(self._handles[self._keys[i]]))
            i += 1
        return out

    def value_of(self, handle: int) -> Optional[Scalar]:
        return self._value_of.get(handle)

    def items(self) -> List[Tuple[Scalar, Set[int]]]:
        return [(k, set(self._handles[k])) for k in self._keys]

    def to_json(self) -> dict:
        return {
            "table": self.table,
            "column": self.column,
            "entries": [
                [scalar_to_json(k), sorted(self._handles[k])] for k in self._keys
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "LocalIndex":
        idx = cls(data["table"], data["column"])
        for k_json, handles in data["entries"]:
            value = scalar_from_json(k_json)
            for h in handles:
                idx.add(value, h)
        return idx


def maintain_indexes(
    indexes: Dict[Tuple[str, str], LocalIndex],
    table: str,
    rows: Sequence[Tuple[int, Dict[str, Optional[Scalar]]]],
    specs: Iterable[Tuple[str, str]],
) -> None:
    """Reflect freshly committed rows in every index spec for their table."""
    for spec_table, column in specs:
        if spec_table != table:
            continue
        idx = indexes.get((table, column))
        if idx is None:
            idx = indexes[(table, column)] = LocalIndex(table, column)
        for handle, row in rows:
            value = row.get(column)
            if value is not None:
                idx.add(value, handle)


# --- ingest-time aggregates -------------------------------------------------------

def _round_to_unit(total: Decimal, count: int, value_type: str) -> Scalar:
    avg = (total / Decimal(count)).quantize(
        Decimal(1) if value_type != "decimal" else Decimal("0.01"), rounding=ROUND_HALF_UP
    )
    return int(avg) if value_type != "decimal" else avg


def compute_aggregate(
    kind: str, column: str, rows: Sequence[Dict[str, Optional[Scalar]]], value_type: str
) -> Optional[Scalar]:
    values = [r[column] for r in rows if r.get(column) is not None]
    if not values:
        return None
    if kind == "monthly_avg":
        total = sum((Decimal(str(v)) for v in values), Decimal(0))
        return _round_to_unit(total, len(values), value_type)
    if kind == "monthly_max":
        return max(values)
    if kind == "monthly_min":
        return min(values)
    raise ValueError(f"unknown aggregate kind: {kind}")


MonthRowsProvider = Callable[[str, Month], List[Dict[str, Optional[Scalar]]]]


def apply_ingest_enrichment(
    schema_tags: Sequence[SchemaTag],
    enrichment_policies: Sequence[EnrichmentPolicy],
    storage_policies: Sequence[StoragePolicy],
    registry: SchemaRegistry,
    month_rows: MonthRowsProvider,
) -> Tuple[List[SchemaTag], Dict[Tuple[str, str], str]]:
    """Replace provisional derived-table values with aggregates computed over
    all base rows of the affected month, incoming rows included. Base tags
    pass through untouched. Returns the final tags plus a provenance map
    keyed by (table, attribute) for the derived bindings.

    month_rows fetches committed base rows; it may raise StoreUnavailable,
    which aborts the whole ingestion."""
    specs = {}
    for policy in storage_policies:
        for spec in policy.derived_tables:
            specs[spec.name] = (policy.base_table, spec)
    ingest_targets = {
        p.target_table: p.source_table
        for p in enrichment_policies
        if p.timing == "ingest_time"
    }

    base_tags: List[SchemaTag] = []
    derived_months: Dict[Tuple[str, Month], None] = {}
    incoming_by_table: Dict[str, List[Dict[str, Optional[Scalar]]]] = {}
    for tag in schema_tags:
        schema = registry.tables.get(tag.table_name)
        if schema is not None and schema.is_derived:
            month = tag.get("Date")
            if isinstance(month, Month) and tag.table_name in ingest_targets:
                derived_months.setdefault((tag.table_name, month), None)
            continue
        base_tags.append(tag)
        incoming_by_table.setdefault(tag.table_name, []).append(tag.as_dict())

    out = list(base_tags)
    provenance: Dict[Tuple[str, str], str] = {}
    for table_name, month in derived_months:
        source = ingest_targets[table_name]
        base_table, spec = specs[table_name]
        if base_table != source:
            continue
        rows = list(month_rows(source, month))
        for row in incoming_by_table.get(source, []):
            d = row.get("Date")
            if isinstance(d, date) and Month.of(d) == month:
                rows.append(row)
        bindings: List[Tuple[str, Scalar]] = [("Date", month)]
        schema = registry.tables[table_name]
        for column in spec.columns:
            col = schema.column(column)
            value = compute_aggregate(
                spec.aggregate, column, rows, col.value_type if col else "integer"
            )
            if value is not None:
                bindings.append((column, value))
                provenance[(table_name, column)] = PROV_AGGREGATE
        if len(bindings) > 1:
            out.append(SchemaTag(table_name, tuple(bindings)))
    return out, provenance


# --- query-time extrapolation ---------------------------------------------------------

@dataclass(frozen=True)
class ExtrapolationProposal:
    table: str
    row_handle: int
    column: str
    value: Scalar
    source_table: str
    source_date: date
    source_time: Optional[str]


DayRowsProvider = Callable[[str, date], List[Dict[str, Optional[Scalar]]]]


def extrapolate_at_query(
    table: str,
    rows: Sequence[Tuple[int, Dict[str, Optional[Scalar]]]],
    policy: EnrichmentPolicy,
    day_rows: DayRowsProvider,
    fillable_columns: Sequence[str],
    skip_targets: Optional[Set[Tuple[int, str]]] = None,
) -> Tuple[List[Dict[str, EnrichedBinding]], List[ExtrapolationProposal]]:
    """Fill NULL cells from a same-calendar-day row of the policy's source
    table. Filled cells carry the extrapolated provenance; everything the
    user already rejected (skip_targets) stays NULL. Failure to find a
    source is not an error."""
    assert policy.timing == "process_time"
    skip = skip_targets or set()
    enriched: List[Dict[str, EnrichedBinding]] = []
    proposals: List[ExtrapolationProposal] = []
    day_cache: Dict[date, List[Dict[str, Optional[Scalar]]]] = {}
    for handle, row in rows:
        out: Dict[str, EnrichedBinding] = {
            col: EnrichedBinding(col, value) for col, value in row.items()
        }
        row_date = row.get("Date")
        if isinstance(row_date, date):
            if row_date not in day_cache:
                day_cache[row_date] = day_rows(policy.source_table, row_date)
            candidates = day_cache[row_date]
            row_moment = combine_date_time(row_date, _text_or_none(row.get("Time")))
            for column in fillable_columns:
                if column not in row or row[column] is not None or (handle, column) in skip:
                    continue
                pick = _nearest_with_value(candidates, column, row_moment)
                if pick is None:
                    continue
                value, src = pick
                out[column] = EnrichedBinding(column, value, PROV_EXTRAPOLATED)
                proposals.append(
                    ExtrapolationProposal(
                        table=table,
                        row_handle=handle,
                        column=column,
                        value=value,
                        source_table=policy.source_table,
                        source_date=row_date,
                        source_time=_text_or_none(src.get("Time")),
                    )
                )
        enriched.append(out)
    return enriched, proposals


def _text_or_none(value: Optional[Scalar]) -> Optional[str]:
    return value if isinstance(value, str) and value else None


def _nearest_with_value(
    candidates: Sequence[Dict[str, Optional[Scalar]]], column: str, moment: datetime
) -> Optional[Tuple[Scalar, Dict[str, Optional[Scalar]]]]:
    best = None
    for row in candidates:
        value = row.get(column)
        if value is None:
            continue
        d = row.get("Date")
        if not isinstance(d, date):
            continue
        src_moment = combine_date_time(d, _text_or_none(row.get("Time")))
        key = (abs(src_moment - moment), src_moment)
        if best is None or key < best[0]:
            best = (key, value, row)
    if best is None:
        return None
    return best[1], best[2]
