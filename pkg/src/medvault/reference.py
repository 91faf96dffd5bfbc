"""Naive plaintext reference engine.

An independent implementation of query semantics over plain dicts: no
encryption, no store, no indexes, no derived tables. Aggregates are
recomputed from base rows with Fraction arithmetic, extrapolation and
sharing are re-derived from first principles. The encrypted path must
produce identical answers; the acceptance suite and the oracle-diff CLI
verb diff the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from fractions import Fraction
from math import floor
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .policies import SharingPolicy
from .values import Month, Scalar, combine_date_time


@dataclass
class PlainObject:
    handle: str
    object_class: str
    captured: Optional[date]
    condition: Optional[str]


class PlainReferenceEngine:
    """Brute-force evaluator over plaintext rows."""

    def __init__(self, fillable_columns: Sequence[str] = ()) -> None:
        self.tables: Dict[str, List[Dict[str, Optional[Scalar]]]] = {}
        self.objects: List[PlainObject] = []
        self.fillable = tuple(fillable_columns)
        self._prov: Dict[int, Dict[str, str]] = {}

    def add_row(
        self,
        table: str,
        row: Dict[str, Optional[Scalar]],
        provenance: Optional[Dict[str, str]] = None,
    ) -> None:
        copied = dict(row)
        self.tables.setdefault(table, []).append(copied)
        if provenance:
            self._prov[id(copied)] = dict(provenance)

    def prov_for(self, row: Dict[str, Optional[Scalar]], column: str) -> str:
        """Recorded provenance travels with the data; evaluation stays naive."""
        return self._prov.get(id(row), {}).get(column, "source")

    def add_object(self, obj: PlainObject) -> None:
        self.objects.append(obj)

    # --- aggregates -----------------------------------------------------------

    def aggregate(self, fn: str, column: str, table: str, month: Month) -> Optional[Scalar]:
        values = [
            row[column]
            for row in self.tables.get(table, [])
            if isinstance(row.get("Date"), date)
            and Month.of(row["Date"]) == month
            and row.get(column) is not None
        ]
        if not values:
            return None
        if fn == "max":
            return max(values)
        if fn == "min":
            return min(values)
        if fn == "avg":
            total = Fraction(0)
            is_decimal = False
            for v in values:
                if isinstance(v, Decimal):
                    is_decimal = True
                    total += Fraction(v)
                else:
                    total += Fraction(v)
            mean = total / len(values)
            if is_decimal:
                scaled = floor(mean * 100 + Fraction(1, 2))
                return Decimal(scaled) / Decimal(100)
            return int(floor(mean + Fraction(1, 2)))
        raise ValueError(f"unknown aggregate: {fn}")

    # --- selection --------------------------------------------------------------

    def select(
        self, table: str, filters: Sequence[Tuple[str, str, Scalar, Optional[Scalar]]]
    ) -> List[Dict[str, Optional[Scalar]]]:
        return [
            row for row in self.tables.get(table, []) if _matches(row, filters)
        ]

    def tables_with_column(self, column: str) -> List[str]:
        return sorted(t for t, rows in self.tables.items() if any(column in r for r in rows))

    # --- extrapolation -------------------------------------------------------------

    def extrapolate(
        self,
        rows: Sequence[Dict[str, Optional[Scalar]]],
        source_table: str,
        skip: Optional[Set[Tuple[int, str]]] = None,
    ) -> List[Dict[str, Tuple[Optional[Scalar], str]]]:
        """Same-day nearest-time fill; returns (value, provenance) per cell."""
        out = []
        for row in rows:
            filled: Dict[str, Tuple[Optional[Scalar], str]] = {
                col: (value, self.prov_for(row, col)) for col, value in row.items()
            }
            d = row.get("Date")
            if isinstance(d, date):
                moment = combine_date_time(d, _text(row.get("Time")))
                same_day = [
                    src
                    for src in self.tables.get(source_table, [])
                    if src.get("Date") == d
                ]
                for col in self.fillable:
                    if col not in row or row[col] is not None:
                        continue
                    best = None
                    for src in same_day:
                        if src.get(col) is None:
                            continue
                        src_moment = combine_date_time(d, _text(src.get("Time")))
                        key = (abs(src_moment - moment), src_moment)
                        if best is None or key < best[0]:
                            best = (key, src[col])
                    if best is not None:
                        filled[col] = (best[1], "extrapolated")
            out.append(filled)
        return out

    # --- sharing ----------------------------------------------------------------------

    def gather_condition(
        self, condition: str, policy: SharingPolicy
    ) -> Tuple[Dict[str, List[Dict[str, Optional[Scalar]]]], List[PlainObject]]:
        """Allowlist release: rows of included tables and objects of included
        classes, minus anything tagged with a different, non-included condition."""
        cond_norm = condition.strip().lower()
        included_norm = {c.strip().lower() for c in policy.included}
        rows_out: Dict[str, List[Dict[str, Optional[Scalar]]]] = {}
        for table in sorted(self.tables):
            if table.strip().lower() not in included_norm:
                continue
            kept = [
                row
                for row in self.tables[table]
                if _condition_allowed(row.get("Condition"), cond_norm, included_norm)
            ]
            if kept:
                rows_out[table] = kept
        objects_out = [
            obj
            for obj in self.objects
            if obj.object_class.strip().lower() in included_norm
            and _condition_allowed(obj.condition, cond_norm, included_norm)
        ]
        return rows_out, objects_out


def _text(value: Optional[Scalar]) -> Optional[str]:
    return value if isinstance(value, str) and value else None


def _condition_allowed(
    value: Optional[Scalar], condition_norm: str, included_norm: Set[str]
) -> bool:
    if value is None:
        return True
    v = str(value).strip().lower()
    return v == condition_norm or v in included_norm


def _matches(
    row: Dict[str, Optional[Scalar]],
    filters: Sequence[Tuple[str, str, Scalar, Optional[Scalar]]],
) -> bool:
    for column, op, literal, literal2 in filters:
        value = row.get(column)
        if value is None:
            return False
        if op == "=" and value != literal:
            return False
        if op == "<" and not value < literal:
            return False
        if op == "<=" and not value <= literal:
            return False
        if op == ">" and not value > literal:
            return False
        if op == ">=" and not value >= literal:
            return False
        if op == "between" and not (literal <= value <= literal2):
            return False
    return True
