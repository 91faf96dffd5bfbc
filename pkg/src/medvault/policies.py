"""The three policy kinds and the pattern learner behind storage policies.

Storage policies tell the schema manager which derived tables and local
indexes to keep; enrichment policies say when derived or missing values
get computed (at ingest or at query time); sharing policies are explicit
per-condition allowlists. Storage policies are learned from query-pattern
frequencies once a shape crosses a configurable threshold, and every
learned derived table is paired with an ingest-time enrichment policy.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

AGGREGATE_KINDS = ("monthly_avg", "monthly_max", "monthly_min")
_AGG_OF_FN = {"avg": "monthly_avg", "max": "monthly_max", "min": "monthly_min"}


@dataclass(frozen=True)
class DerivedTableSpec:
    name: str
    aggregate: str
    columns: Tuple[str, ...]

    def __post_init__(self) -> None:
        if self.aggregate not in AGGREGATE_KINDS:
            raise ValueError(f"bad aggregate kind: {self.aggregate}")
        if not self.columns:
            raise ValueError(f"{self.name}: derived table needs at least one column")


@dataclass(frozen=True)
class StoragePolicy:
    base_table: str
    derived_tables: Tuple[DerivedTableSpec, ...]
    index_specs: Tuple[Tuple[str, str], ...]
    origin: str = "user_preference"  # or "learned"


@dataclass(frozen=True)
class EnrichmentPolicy:
    timing: str  # "ingest_time" | "process_time"
    source_table: str
    target_table: str
    rule: str  # "aggregate_fill" | "same_day_extrapolation"

    def __post_init__(self) -> None:
        pairs = {"ingest_time": "aggregate_fill", "process_time": "same_day_extrapolation"}
        if pairs.get(self.timing) != self.rule:
            raise ValueError(f"timing {self.timing} cannot pair with rule {self.rule}")


@dataclass(frozen=True)
class SharingPolicy:
    condition_label: str
    included: FrozenSet[str]
    version: int = 1

    def allows_category(self, category: str) -> bool:
        return _norm(category) in {_norm(c) for c in self.included} or _norm(
            category
        ) == _norm(self.condition_label)


EMPTY_SHARING_POLICY = SharingPolicy(condition_label="", included=frozenset(), version=0)


@dataclass(frozen=True)
class SharingLookup:
    policy: SharingPolicy
    needs_user_input: bool


def _norm(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip()).lower()


def derived_table_name(base_table: str, aggregate: str, columns: Sequence[str]) -> str:
    """Monthly averages roll all columns into one table named after the base;
    max/min get one table per column."""
    if aggregate == "monthly_avg":
        plural = base_table if base_table.endswith("s") else base_table + "s"
        return f"Monthly_Avg_{plural}"
    word = "High" if aggregate == "monthly_max" else "Low"
    col = re.sub(r"\s+", "_", columns[0].strip())
    return f"Monthly_{word}_{col}"


class PolicyStore:
    """Mutable home of all three policy kinds plus the query-pattern counters."""

    def __init__(
        self,
        storage: Iterable[StoragePolicy] = (),
        enrichment: Iterable[EnrichmentPolicy] = (),
        sharing: Iterable[SharingPolicy] = (),
    ) -> None:
        self.storage: List[StoragePolicy] = list(storage)
        self.enrichment: List[EnrichmentPolicy] = list(enrichment)
        self.sharing: Dict[str, SharingPolicy] = {}
        for pol in sharing:
            current = self.sharing.get(_norm(pol.condition_label))
            if current is None or pol.version >= current.version:
                self.sharing[_norm(pol.condition_label)] = pol
        self.patterns: Dict[str, int] = {}
        self.last_used: Dict[str, float] = {}

    # --- query patterns --------------------------------------------------------

    def record_query(self, shape: str, tables: Iterable[str] = ()) -> int:
        self.patterns[shape] = self.patterns.get(shape, 0) + 1
        now = time.time()
        for t in tables:
            self.last_used[t] = now
        return self.patterns[shape]

    def derive_storage_policies(self, threshold: int) -> List[StoragePolicy]:
        """Aggregate-shaped patterns at or above the threshold become derived
        tables with supporting index specs; monotone in the counters."""
        if threshold < 1:
            raise ValueError("threshold must be >= 1")
        by_table_avg: Dict[str, List[str]] = {}
        singles: List[Tuple[str, str, str]] = []
        for shape, freq in sorted(self.patterns.items()):
            if freq < threshold:
                continue
            parsed = parse_aggregate_shape(shape)
            if parsed is None:
                continue
            fn, column, table = parsed
            if fn == "avg":
                by_table_avg.setdefault(table, []).append(column)
            else:
                singles.append((fn, column, table))
        out: List[StoragePolicy] = []
        for table, columns in sorted(by_table_avg.items()):
            columns = sorted(set(columns))
            spec = DerivedTableSpec(
                derived_table_name(table, "monthly_avg", columns), "monthly_avg", tuple(columns)
            )
            out.append(self._policy_for(table, spec))
        for fn, column, table in singles:
            agg = _AGG_OF_FN[fn]
            spec = DerivedTableSpec(derived_table_name(table, agg, [column]), agg, (column,))
            out.append(self._policy_for(table, spec))
        return out

    def _policy_for(self, table: str, spec: DerivedTableSpec) -> StoragePolicy:
        indexes = [(table, "Date")] + [(table, c) for c in spec.columns]
        return StoragePolicy(
            base_table=table,
            derived_tables=(spec,),
            index_specs=tuple(indexes),
            origin="learned",
        )

    def apply_learned(self, policies: Sequence[StoragePolicy]) -> List[StoragePolicy]:
        """Merge learned policies into the store; each new derived table gets
        its paired ingest-time enrichment policy. Returns what was new."""
        known = {
            (p.base_table, spec.name, spec.aggregate, spec.columns)
            for p in self.storage
            for spec in p.derived_tables
        }
        added = []
        for policy in policies:
            new_specs = [
                s
                for s in policy.derived_tables
                if (policy.base_table, s.name, s.aggregate, s.columns) not in known
            ]
            if not new_specs:
                continue
            merged = StoragePolicy(
                base_table=policy.base_table,
                derived_tables=tuple(new_specs),
                index_specs=policy.index_specs,
                origin=policy.origin,
            )
            self.storage.append(merged)
            added.append(merged)
            for spec in new_specs:
                known.add((policy.base_table, spec.name, spec.aggregate, spec.columns))
                pair = EnrichmentPolicy(
                    "ingest_time", policy.base_table, spec.name, "aggregate_fill"
                )
                if pair not in self.enrichment:
                    self.enrichment.append(pair)
        return added

    # --- sharing -----------------------------------------------------------------

    def lookup_sharing(self, condition_label: str) -> SharingLookup:
        policy = self.sharing.get(_norm(condition_label))
        if policy is None:
            return SharingLookup(EMPTY_SHARING_POLICY, needs_user_input=True)
        return SharingLookup(policy, needs_user_input=False)

    # --- housekeeping ---------------------------------------------------------------

    def flag_unused_tables(
        self, tables: Iterable[str], now: float, dormancy_seconds: float
    ) -> List[str]:
        """Advisory only: derived tables idle past the dormancy window.
        Nothing is ever deleted automatically."""
        flagged = []
        for t in tables:
            last = self.last_used.get(t)
            if last is None or now - last >= dormancy_seconds:
                flagged.append(t)
        return sorted(flagged)

    def index_specs(self) -> List[Tuple[str, str]]:
        seen = []
        for p in self.storage:
            for spec in p.index_specs:
                if spec not in seen:
                    seen.append(spec)
        return seen

    # --- persistence -------------------------------------------------------------------

    def patterns_to_json(self) -> dict:
        return {"patterns": self.patterns, "last_used": self.last_used}

    def patterns_from_json(self, data: dict) -> None:
        self.patterns = dict(data.get("patterns", {}))
        self.last_used = dict(data.get("last_used", {}))

    def to_json(self) -> dict:
        return {
            "storage": [
                {
                    "base_table": p.base_table,
                    "derived_tables": [
                        {"name": s.name, "aggregate": s.aggregate, "columns": list(s.columns)}
                        for s in p.derived_tables
                    ],
                    "index_specs": [list(i) for i in p.index_specs],
                    "origin": p.origin,
                }
                for p in self.storage
            ],
            "enrichment": [
                {
                    "timing": p.timing,
                    "source_table": p.source_table,
                    "target_table": p.target_table,
                    "rule": p.rule,
                }
                for p in self.enrichment
            ],
            "sharing": [
                {
                    "condition": p.condition_label,
                    "included": sorted(p.included),
                    "version": p.version,
                }
                for p in self.sharing.values()
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "PolicyStore":
        storage = [
            StoragePolicy(
                base_table=p["base_table"],
                derived_tables=tuple(
                    DerivedTableSpec(s["name"], s["aggregate"], tuple(s["columns"]))
                    for s in p["derived_tables"]
                ),
                index_specs=tuple(tuple(i) for i in p["index_specs"]),
                origin=p["origin"],
            )
            for p in data.get("storage", [])
        ]
        enrichment = [
            EnrichmentPolicy(p["timing"], p["source_table"], p["target_table"], p["rule"])
            for p in data.get("enrichment", [])
        ]
        sharing = [
            SharingPolicy(p["condition"], frozenset(p["included"]), p["version"])
            for p in data.get("sharing", [])
        ]
        return cls(storage, enrichment, sharing)


def parse_aggregate_shape(shape: str) -> Optional[Tuple[str, str, str]]:
    """Shapes look like 'aggregate:max:Cholesterol:Vital:month'."""
    parts = shape.split(":")
    if len(parts) == 5 and parts[0] == "aggregate" and parts[4] == "month":
        fn = parts[1]
        if fn in _AGG_OF_FN:
            return fn, parts[2], parts[3]
    return None


def aggregate_shape(fn: str, column: str, table: str) -> str:
    return f"aggregate:{fn}:{column}:{table}:month"


# --- sharing policy files -----------------------------------------------------------

def load_sharing_policies(path: Path) -> List[SharingPolicy]:
    """Versioned allowlist file; entries append over time and the highest
    version per condition wins. See docs/FORMATS.md for the grammar."""
    data = json.loads(Path(path).read_text())
    out = []
    for entry in data.get("policies", []):
        out.append(
            SharingPolicy(
                condition_label=entry["condition"],
                included=frozenset(entry["included"]),
                version=int(entry.get("version", 1)),
            )
        )
    return out


def append_sharing_policy(path: Path, policy: SharingPolicy) -> None:
    path = Path(path)
    data = json.loads(path.read_text()) if path.exists() else {"policies": []}
    data["policies"].append(
        {
            "condition": policy.condition_label,
            "included": sorted(policy.included),
            "version": policy.version,
        }
    )
    path.write_text(json.dumps(data, indent=2) + "\n")
