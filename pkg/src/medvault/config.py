"""Vault configuration: the editable files a deployment starts from.

A vault directory holds a config/ folder with the reserved-keyword
dictionary, the synonym dictionary, the named-table registry, seeded
storage/enrichment policies, and the versioned sharing allowlists. All of
them are plain text or JSON and safe to edit between runs; grammar notes
live in docs/FORMATS.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .parser import DEFAULT_KEYWORDS, KeywordDictionary
from .policies import (
    DerivedTableSpec,
    EnrichmentPolicy,
    PolicyStore,
    SharingPolicy,
    StoragePolicy,
    load_sharing_policies,
)
from .schema import Column, SchemaRegistry, SynonymDictionary, TableConfig, TableSchema

OBJECTS_TABLE = "Objects"


@dataclass
class VaultConfig:
    store_host: str = "127.0.0.1"
    store_port: int = 7744
    auth_token: str = "dev-token"
    pattern_threshold: int = 3
    dormancy_days: int = 180
    fillable_columns: Tuple[str, ...] = (
        "Heart Rate",
        "Cholesterol",
        "Weight",
        "Height",
        "Blood Pressure",
    )

    def to_file(self, path: Path) -> None:
        data = asdict(self)
        data["fillable_columns"] = list(self.fillable_columns)
        Path(path).write_text(json.dumps(data, indent=2) + "\n")

    @classmethod
    def from_file(cls, path: Path) -> "VaultConfig":
        data = json.loads(Path(path).read_text())
        data["fillable_columns"] = tuple(data.get("fillable_columns", ()))
        return cls(**data)


DEFAULT_SYNONYMS = {
    "Body Mass Index": "BMI",
    "HR": "Heart Rate",
    "BP": "Blood Pressure",
    "Resting Heart Rate": "Heart Rate",
}

_D = "deterministic"
_O = "order_preserving"
_X = "opaque"

DEFAULT_TABLES: Tuple[TableConfig, ...] = (
    TableConfig(
        name="Vital",
        signature=frozenset({"Date", "Heart Rate", "Cholesterol"}),
        columns=(
            Column("Date", "date", _O),
            Column("Heart Rate", "integer", _O),
            Column("Cholesterol", "integer", _O),
            Column("Time", "text", _X),
        ),
    ),
    TableConfig(
        name="Visit_Details",
        signature=frozenset({"Date", "Doctor", "Facility"}),
        columns=(
            Column("Date", "date", _O),
            Column("Facility", "text", _D),
            Column("Doctor", "text", _D),
            Column("Heart Rate", "integer", _O),
            Column("Cholesterol", "integer", _O),
            Column("Weight", "decimal", _O),
            Column("Time", "text", _X),
        ),
    ),
    TableConfig(
        name="Notes",
        signature=frozenset({"Date", "Description"}),
        columns=(
            Column("Date", "date", _O),
            Column("Description", "text", _X),
            Column("Condition", "text", _D),
            Column("Doctor", "text", _D),
        ),
    ),
    TableConfig(
        name="Medications",
        signature=frozenset({"Date", "Medication"}),
        columns=(
            Column("Date", "date", _O),
            Column("Medication", "text", _D),
            Column("Condition", "text", _D),
        ),
    ),
    TableConfig(
        name="Physical_Therapy_Plans",
        signature=frozenset({"Date", "Treatment"}),
        columns=(
            Column("Date", "date", _O),
            Column("Treatment", "text", _X),
            Column("Condition", "text", _D),
        ),
    ),
)

OBJECTS_SCHEMA = TableSchema(
    table_name=OBJECTS_TABLE,
    columns=[
        Column("ObjectClass", "text", _D),
        Column("Date", "date", _O),
        Column("Condition", "text", _D),
        Column("Resolution", "text", _X),
        Column("Description", "text", _X),
        Column("Handle", "text", _X),
    ],
)

# Seeded storage policy: monthly average vitals plus monthly peak cholesterol,
# with local indexes on the columns those aggregates read.
DEFAULT_STORAGE_POLICIES: Tuple[StoragePolicy, ...] = (
    StoragePolicy(
        base_table="Vital",
        derived_tables=(
            DerivedTableSpec("Monthly_Avg_Vitals", "monthly_avg", ("Heart Rate", "Cholesterol")),
            DerivedTableSpec("Monthly_High_Cholesterol", "monthly_max", ("Cholesterol",)),
        ),
        index_specs=(
            ("Vital", "Date"),
            ("Vital", "Heart Rate"),
            ("Vital", "Cholesterol"),
        ),
        origin="user_preference",
    ),
)

DEFAULT_ENRICHMENT_POLICIES: Tuple[EnrichmentPolicy, ...] = (
    EnrichmentPolicy("ingest_time", "Vital", "Monthly_Avg_Vitals", "aggregate_fill"),
    EnrichmentPolicy("ingest_time", "Vital", "Monthly_High_Cholesterol", "aggregate_fill"),
    EnrichmentPolicy("process_time", "Vital", "Visit_Details", "same_day_extrapolation"),
)

DEFAULT_SHARING_POLICIES: Tuple[SharingPolicy, ...] = (
    SharingPolicy(
        condition_label="disc herniation",
        included=frozenset({"MRI", "X-ray", "Medications", "Physical_Therapy_Plans"}),
        version=1,
    ),
)


@dataclass
class ConfigBundle:
    config: VaultConfig
    keywords: KeywordDictionary
    synonyms: SynonymDictionary
    table_configs: Tuple[TableConfig, ...]
    storage_policies: Tuple[StoragePolicy, ...]
    enrichment_policies: Tuple[EnrichmentPolicy, ...]
    sharing_policies: Tuple[SharingPolicy, ...]

    def new_policy_store(self) -> PolicyStore:
        return PolicyStore(
            storage=self.storage_policies,
            enrichment=self.enrichment_policies,
            sharing=self.sharing_policies,
        )

    def new_registry(self) -> SchemaRegistry:
        return SchemaRegistry(self.table_configs)


def _tables_to_json(configs: Tuple[TableConfig, ...]) -> dict:
    return {
        "tables": [
            {
                "name": c.name,
                "signature": sorted(c.signature),
                "columns": [[col.name, col.value_type, col.encryption] for col in c.columns],
            }
            for c in configs
        ]
    }


def _tables_from_json(data: dict) -> Tuple[TableConfig, ...]:
    return tuple(
        TableConfig(
            name=t["name"],
            signature=frozenset(t["signature"]),
            columns=tuple(Column(*c) for c in t["columns"]),
        )
        for t in data["tables"]
    )


def _policies_to_json(
    storage: Tuple[StoragePolicy, ...], enrichment: Tuple[EnrichmentPolicy, ...]
) -> dict:
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
            for p in storage
        ],
        "enrichment": [
            {
                "timing": p.timing,
                "source_table": p.source_table,
                "target_table": p.target_table,
                "rule": p.rule,
            }
            for p in enrichment
        ],
    }


def _policies_from_json(data: dict) -> Tuple[Tuple[StoragePolicy, ...], Tuple[EnrichmentPolicy, ...]]:
    storage = tuple(
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
    )
    enrichment = tuple(
        EnrichmentPolicy(p["timing"], p["source_table"], p["target_table"], p["rule"])
        for p in data.get("enrichment", [])
    )
    return storage, enrichment


def init_vault_dir(vault_dir: Path, config: Optional[VaultConfig] = None) -> Path:
    """Create the editable config files that do not exist yet."""
    vault_dir = Path(vault_dir)
    cfg_dir = vault_dir / "config"
    cfg_dir.mkdir(parents=True, exist_ok=True)
    (vault_dir / "reports").mkdir(exist_ok=True)
    config = config or VaultConfig()
    if not (cfg_dir / "vault.json").exists():
        config.to_file(cfg_dir / "vault.json")
    if not (cfg_dir / "reserved_keywords.txt").exists():
        KeywordDictionary(DEFAULT_KEYWORDS).to_file(cfg_dir / "reserved_keywords.txt")
    if not (cfg_dir / "synonyms.txt").exists():
        SynonymDictionary(DEFAULT_SYNONYMS).to_file(cfg_dir / "synonyms.txt")
    if not (cfg_dir / "tables.json").exists():
        (cfg_dir / "tables.json").write_text(
            json.dumps(_tables_to_json(DEFAULT_TABLES), indent=2) + "\n"
        )
    if not (cfg_dir / "policies.json").exists():
        (cfg_dir / "policies.json").write_text(
            json.dumps(
                _policies_to_json(DEFAULT_STORAGE_POLICIES, DEFAULT_ENRICHMENT_POLICIES),
                indent=2,
            )
            + "\n"
        )
    if not (cfg_dir / "sharing_policies.json").exists():
        (cfg_dir / "sharing_policies.json").write_text(
            json.dumps(
                {
                    "policies": [
                        {
                            "condition": p.condition_label,
                            "included": sorted(p.included),
                            "version": p.version,
                        }
                        for p in DEFAULT_SHARING_POLICIES
                    ]
                },
                indent=2,
            )
            + "\n"
        )
    return vault_dir


def load_config_bundle(vault_dir: Path) -> ConfigBundle:
    cfg_dir = Path(vault_dir) / "config"
    storage, enrichment = _policies_from_json(
        json.loads((cfg_dir / "policies.json").read_text())
    )
    return ConfigBundle(
        config=VaultConfig.from_file(cfg_dir / "vault.json"),
        keywords=KeywordDictionary.from_file(cfg_dir / "reserved_keywords.txt"),
        synonyms=SynonymDictionary.from_file(cfg_dir / "synonyms.txt"),
        table_configs=_tables_from_json(json.loads((cfg_dir / "tables.json").read_text())),
        storage_policies=storage,
        enrichment_policies=enrichment,
        sharing_policies=tuple(load_sharing_policies(cfg_dir / "sharing_policies.json")),
    )
