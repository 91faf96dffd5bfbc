#!/usr/bin/env python3
"""End-to-end walkthrough on a throwaway vault and store.

Builds a small fixture corpus (vitals CSV, a specialist visit without
vitals, medications for two conditions, an MRI with a sidecar), ingests it
through a manifest file, then runs the headline queries: monthly
aggregates served from derived tables, a visit query that extrapolates
same-day vitals, and a selective share that must exclude the unrelated
condition.
"""

import shutil
import tempfile
from pathlib import Path

from medvault.cli import _print_resultset
from medvault.store.client import StoreClient
from medvault.store.service import StoreServer
from medvault.vault import VaultEngine

FIXTURES = {
    "vitals.csv": "Date,Heart Rate,Cholesterol\n10/1/23,90,190\n10/10/23,80,150\n11/5/23,100,200\n11/24/23,90,220\n",
    "visit.txt": "Date: 11/24/23\nDoctor: R. Chen\nFacility: Orthopedic Associates\n",
    "meds.csv": "Date,Medication,Condition\n11/20/23,Naproxen,disc herniation\n11/21/23,Sertraline,OCD\n",
    "pt.txt": "Date: 11/22/23\nTreatment: lumbar stabilization program\nCondition: disc herniation\n",
    "mri.bin": None,  # binary, written separately
    "mri.bin.sidecar.txt": "Date: 11/15/23\nCondition: disc herniation\nResolution: 512x512\n",
}

MANIFEST = """\
# path|format|source_label[|object_class]
vitals.csv|tabular|home clinic
visit.txt|keyvalue_text|orthopedic associates
meds.csv|tabular|pharmacy
pt.txt|keyvalue_text|physical therapy
mri.bin|opaque_binary|imaging center|MRI
"""

EXTRA_KEYWORDS = ["Medication", "Condition", "Treatment", "Time"]


def main() -> None:
    workdir = Path(tempfile.mkdtemp(prefix="medvault-demo-"))
    try:
        server = StoreServer(data_dir=str(workdir / "store-data")).start()
        vault_dir = workdir / "vault"

        engine = VaultEngine(vault_dir, store=StoreClient("127.0.0.1", server.port))
        kw = vault_dir / "config" / "reserved_keywords.txt"
        kw.write_text(kw.read_text() + "\n".join(EXTRA_KEYWORDS) + "\n")
        engine = VaultEngine(vault_dir, store=StoreClient("127.0.0.1", server.port))

        fixture_dir = workdir / "fixtures"
        fixture_dir.mkdir()
        for name, content in FIXTURES.items():
            if content is None:
                (fixture_dir / name).write_bytes(b"\x89MRI-PIXEL-DATA" * 512)
            else:
                (fixture_dir / name).write_text(content)
        manifest = fixture_dir / "manifest.txt"
        manifest.write_text(MANIFEST)

        print("== upload ==")
        report = engine.upload_manifest(manifest)
        for doc in report.docs:
            print(f"  {doc.status}: {doc.doc_id} {doc.rows_added} {doc.derived_updated}")
        print("  live rows:", report.table_counts)

        for text in (
            "what was my maximum cholesterol in November 2023",
            "aggregate avg Heart Rate over Vital in 2023-10",
            "select Visit_Details where Date = 2023-11-24",
        ):
            print(f"\n== query: {text} ==")
            _print_resultset(engine.query(text))

        print("\n== pending extrapolation proposals ==")
        for p in engine.pending_confirmations():
            print(f"  {p.proposal_id}: {p.table}.{p.column} <- {p.value} from {p.source_table}")

        print("\n== share: disc herniation ==")
        _print_resultset(engine.share("disc herniation", mode="preview"))

        print("\n== oracle diff (25 random queries) ==")
        from medvault.cli import _sample_queries

        diff = engine.oracle_diff(_sample_queries(engine, 25, seed=7))
        print(f"  {diff['total']} queries, {len(diff['mismatches'])} mismatches")

        sentinel = "9f" * 32
        print("\n== leakage spot check ==")
        matches = engine.audit_leakage([sentinel.encode()])
        print(f"  sentinel matches in store log: {len(matches)}")

        server.stop()
    finally:
        shutil.rmtree(workdir, ignore_errors=True)


if __name__ == "__main__":
    main()
