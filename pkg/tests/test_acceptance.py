"""Acceptance suite: one test per criterion, one PASS line per criterion.

Run with `pytest tests/test_acceptance.py -v -s`. Every tolerance is pinned
here: integer equality for the monthly rollups, zero violations for the
crypto contracts, zero sentinel matches in the observation log, zero
oracle mismatches across 200 randomized queries on a 1,000-row corpus,
and zero partial ingestions across 120 injected crashes.
"""

import os
import random
import time
from datetime import date, timedelta
from pathlib import Path

import pytest

from medvault.crypto import ColumnKey, OpeCodebook, det_decrypt, det_encrypt, opaque_decrypt, opaque_encrypt
from medvault.enrichment import apply_ingest_enrichment
from medvault.errors import DecryptAuthFailure
from medvault.parser import DocumentFormat, MetadataTag, MetadataTagSet, RawDocument
from medvault.policies import append_sharing_policy, SharingPolicy
from medvault.records import Ciphertext
from medvault.schema import ensure_tables, make_schema_tags
from medvault.store.client import StoreClient
from medvault.vault import PIPELINE_STAGES, VaultEngine, canonical_result
from medvault.values import Month
from tests.conftest import VITALS_CSV, make_engine, sharing_corpus, vitals_doc
from tests.test_schema import registry as fresh_registry, tagset

PASS = "PASS"


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"\n{'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


# --- 1. monthly rollup reproduction ---------------------------------------------------

def test_monthly_rollup_reproduction(tmp_path, store_server):
    started = time.monotonic()
    engine = make_engine(tmp_path, store_server)
    engine.upload_documents([vitals_doc()])

    def table_rows(name):
        rs = engine.query(f"select {name}")
        out = set()
        for section in rs.sections:
            for row in section.rows:
                cells = {b.attribute: b.value for b in row if b.value is not None}
                out.add(tuple(sorted(cells.items())))
        return out

    avg = {
        tuple(v for _k, v in sorted(dict(r).items()))
        for r in table_rows("Monthly_Avg_Vitals")
    }
    expected_avg = {
        (Month(2023, 10), 170, 85),
        (Month(2023, 11), 210, 95),
    }
    got_avg = {
        (dict(r)["Date"], dict(r)["Cholesterol"], dict(r)["Heart Rate"])
        for r in table_rows("Monthly_Avg_Vitals")
    }
    got_high = {
        (dict(r)["Date"], dict(r)["Cholesterol"])
        for r in table_rows("Monthly_High_Cholesterol")
    }
    elapsed = time.monotonic() - started
    engine.close()
    ok = (
        got_avg == expected_avg
        and got_high == {(Month(2023, 10), 190), (Month(2023, 11), 220)}
        and elapsed < 5.0
    )
    report(
        "monthly rollup reproduction (four base rows, exact integers)",
        ok,
        f"avg={sorted(got_avg)}, high={sorted(got_high)}, {elapsed:.2f}s",
    )


# --- 2. schema-tag and enrichment golden values ------------------------------------------

def test_schema_tag_golden_values():
    from medvault.config import DEFAULT_ENRICHMENT_POLICIES, DEFAULT_STORAGE_POLICIES

    reg = fresh_registry()
    incoming = tagset(("Date", date(2023, 11, 24)), ("Heart Rate", 90), ("Cholesterol", 220))
    ensure_tables(incoming, DEFAULT_STORAGE_POLICIES, reg)
    tags = make_schema_tags(incoming, reg, DEFAULT_STORAGE_POLICIES)

    three_tags = (
        [t.table_name for t in tags]
        == ["Vital", "Monthly_Avg_Vitals", "Monthly_High_Cholesterol"]
        and tags[0].as_dict()
        == {"Date": date(2023, 11, 24), "Heart Rate": 90, "Cholesterol": 220}
        and tags[1].as_dict() == {"Date": Month(2023, 11), "Heart Rate": 90, "Cholesterol": 220}
        and tags[2].as_dict() == {"Date": Month(2023, 11), "Cholesterol": 220}
    )

    final, _prov = apply_ingest_enrichment(
        tags,
        DEFAULT_ENRICHMENT_POLICIES,
        DEFAULT_STORAGE_POLICIES,
        reg,
        lambda table, month: [
            {"Date": date(2023, 11, 5), "Heart Rate": 100, "Cholesterol": 200}
        ],
    )
    by_table = {t.table_name: t.as_dict() for t in final}
    enriched = (
        by_table["Monthly_Avg_Vitals"]["Heart Rate"] == 95
        and by_table["Monthly_Avg_Vitals"]["Cholesterol"] == 210
        and by_table["Monthly_High_Cholesterol"]["Cholesterol"] == 220
    )
    report(
        "schema tags and enrichment golden values",
        three_tags and enriched,
        f"tags={[t.table_name for t in tags]}, avg={by_table['Monthly_Avg_Vitals']}",
    )


# --- 3. crypto contracts at 10,000 values --------------------------------------------------

def test_crypto_contracts_randomized():
    rng = random.Random(20231124)
    violations = 0

    det_key = ColumnKey.generate("T", "det", "deterministic")
    opq_key = ColumnKey.generate("T", "opq", "opaque")
    ints = [rng.randint(-(10**12), 10**12) for _ in range(4000)]
    dates = [date(2000, 1, 1) + timedelta(days=rng.randint(0, 40000)) for _ in range(3000)]
    texts = [rng.randbytes(rng.randint(1, 40)).hex() for _ in range(3000)]
    values = ints + dates + texts
    refs = ("t", "c")

    # deterministic: equality pattern and round trips
    cts = {}
    for v in values:
        ct = det_encrypt(det_key, v, refs)
        if det_decrypt(det_key, ct) != v:
            violations += 1
        cts.setdefault(ct.payload, set()).add(v)
    for bucket in cts.values():
        if len(bucket) != 1:
            violations += 1
    sample = rng.sample(values, 500)
    for a, b in zip(sample, sample[1:]):
        same_ct = det_encrypt(det_key, a, refs).payload == det_encrypt(det_key, b, refs).payload
        if same_ct != (a == b):
            violations += 1

    # order-preserving: byte order equals plaintext order per domain
    for domain in (ints, dates):
        book = OpeCodebook()
        codes = {v: book.encode(v) for v in domain}
        ordered = sorted(set(domain))
        for a, b in zip(ordered, ordered[1:]):
            if not codes[a] < codes[b]:
                violations += 1
        for v in rng.sample(domain, 200):
            if book.decode(codes[v]) != v:
                violations += 1

    # tampering always detected
    for v in rng.sample(values, 300):
        ct = det_encrypt(det_key, v, refs)
        i = rng.randrange(len(ct.payload))
        bad = Ciphertext(ct.scheme_id, ct.table_id, ct.column_id,
                         ct.payload[:i] + bytes([ct.payload[i] ^ 0x5A]) + ct.payload[i + 1:])
        try:
            det_decrypt(det_key, bad)
            violations += 1
        except DecryptAuthFailure:
            pass
    for _ in range(300):
        blob = rng.randbytes(rng.randint(1, 64))
        ct = opaque_encrypt(opq_key, blob, refs)
        if opaque_decrypt(opq_key, ct) != blob:
            violations += 1
        i = rng.randrange(len(ct.payload))
        bad = Ciphertext(ct.scheme_id, ct.table_id, ct.column_id,
                         ct.payload[:i] + bytes([ct.payload[i] ^ 0x5A]) + ct.payload[i + 1:])
        try:
            opaque_decrypt(opq_key, bad)
            violations += 1
        except DecryptAuthFailure:
            pass

    report(
        "crypto contracts over 10,000 randomized values",
        violations == 0,
        f"{len(values)} values, {violations} violations",
    )


# --- helpers for the corpus-scale criteria ---------------------------------------------------

def _build_corpus(rng, n_vital=600, n_visit=200, n_meds=150, n_pt=50, sentinels=None):
    """Randomized desk-scale corpus as a handful of documents; optionally
    plants sentinel strings in text-valued cells and object payloads."""
    sentinels = sentinels or []
    sidx = 0

    def sentinel_or(word):
        nonlocal sidx
        if sentinels and sidx < len(sentinels):
            sidx += 1
            return sentinels[sidx - 1]
        return word

    def rdate():
        return (date(2022, 1, 1) + timedelta(days=rng.randint(0, 729))).isoformat()

    vital_rows = [
        f"{rdate()},{rng.randint(45, 190)},{rng.randint(120, 300)}" for _ in range(n_vital)
    ]
    doctors = [sentinel_or(f"Dr {chr(65 + i)}") for i in range(8)]
    facilities = [sentinel_or(f"Clinic {i}") for i in range(5)]
    visit_rows = []
    for _ in range(n_visit):
        hr = rng.choice(["", str(rng.randint(50, 120))])
        chol = rng.choice(["", str(rng.randint(130, 280))])
        visit_rows.append(
            f"{rdate()},{rng.choice(doctors)},{rng.choice(facilities)},{hr},{chol}"
        )
    conditions = ["disc herniation", "OCD", "hypertension"]
    med_names = [sentinel_or(f"med-{i}") for i in range(12)]
    med_rows = [
        f"{rdate()},{rng.choice(med_names)},{rng.choice(conditions)}" for _ in range(n_meds)
    ]
    pt_rows = [
        f"{rdate()},{sentinel_or('plan-' + str(i))},disc herniation" for i in range(n_pt)
    ]
    docs = [
        RawDocument(
            "vitals.csv",
            ("Date,Heart Rate,Cholesterol\n" + "\n".join(vital_rows)).encode(),
            DocumentFormat.TABULAR,
            "clinic",
        ),
        RawDocument(
            "visits.csv",
            (
                "Date,Doctor,Facility,Heart Rate,Cholesterol\n" + "\n".join(visit_rows)
            ).encode(),
            DocumentFormat.TABULAR,
            "clinics",
        ),
        RawDocument(
            "meds.csv",
            ("Date,Medication,Condition\n" + "\n".join(med_rows)).encode(),
            DocumentFormat.TABULAR,
            "pharmacy",
        ),
        RawDocument(
            "pt.csv",
            ("Date,Treatment,Condition\n" + "\n".join(pt_rows)).encode(),
            DocumentFormat.TABULAR,
            "pt",
        ),
    ]
    for i in range(8):
        payload = rng.randbytes(512)
        if sentinels:
            payload += sentinels[i % len(sentinels)].encode()
        condition = rng.choice(conditions)
        docs.append(
            RawDocument(
                f"scan-{i}.bin",
                payload,
                DocumentFormat.OPAQUE_BINARY,
                "imaging",
                sidecar=f"Date: {rdate()}\nCondition: {condition}\n".encode(),
                object_class_hint=rng.choice(["MRI", "X-ray"]),
            )
        )
    return docs, doctors, facilities, conditions


def _random_queries(rng, n, doctors, facilities, conditions):
    months = [f"{y}-{m:02d}" for y in (2022, 2023) for m in range(1, 13)]
    queries = []
    for _ in range(n):
        kind = rng.choice(["agg", "agg", "range", "point", "between", "share", "cond"])
        if kind == "agg":
            fn = rng.choice(["max", "min", "avg"])
            col = rng.choice(["Cholesterol", "Heart Rate"])
            queries.append(f"aggregate {fn} {col} over Vital in {rng.choice(months)}")
        elif kind == "range":
            a = date(2022, 1, 1) + timedelta(days=rng.randint(0, 700))
            b = a + timedelta(days=rng.randint(0, 60))
            queries.append(f"records from {a.isoformat()} to {b.isoformat()}")
        elif kind == "point":
            if rng.random() < 0.5:
                queries.append(f"records from doctor {rng.choice(doctors)}")
            else:
                queries.append(f"records from facility {rng.choice(facilities)}")
        elif kind == "between":
            lo = rng.randint(120, 250)
            queries.append(f"select Vital where Cholesterol between {lo} and {lo + 40}")
        elif kind == "share":
            queries.append(f"share {rng.choice(conditions + ['unknown syndrome'])}")
        else:
            queries.append(f"records about {rng.choice(conditions)}")
    return queries


def _add_hypertension_policy(vault_dir: Path) -> None:
    append_sharing_policy(
        vault_dir / "config" / "sharing_policies.json",
        SharingPolicy("hypertension", frozenset({"Medications"}), 1),
    )


# --- 4. leakage audit ---------------------------------------------------------------------------

def test_leakage_audit(tmp_path, store_server):
    rng = random.Random(7)
    sentinels = [os.urandom(32).hex() for _ in range(120)]  # 32 random bytes, hex text form
    raw_sentinels = [bytes.fromhex(s) for s in sentinels]

    engine = make_engine(tmp_path, store_server)
    _add_hypertension_policy(tmp_path / "vault")
    engine = make_engine(tmp_path, store_server, name="vault", extra_keywords=())

    docs, doctors, facilities, conditions = _build_corpus(
        rng, n_vital=120, n_visit=60, n_meds=60, n_pt=30, sentinels=sentinels
    )
    upload = engine.upload_documents(docs)
    assert upload.error_count == 0

    queries = _random_queries(rng, 50, doctors, facilities, conditions)
    for q in queries:
        engine.query(q)

    log_blob = b"".join(e.raw for e in engine.dump_store_log())
    text_hits = [s for s in sentinels if s.encode() in log_blob]
    raw_hits = [s for s in raw_sentinels if s in log_blob]
    matches = engine.audit_leakage([s.encode() for s in sentinels] + raw_sentinels)
    engine.close()
    report(
        "leakage audit (120 sentinels, ingestion + 50 mixed queries)",
        not text_hits and not raw_hits and not matches,
        f"log={len(log_blob)} bytes, matches={len(matches)}",
    )


# --- 5. oracle equivalence -----------------------------------------------------------------------

def test_oracle_equivalence_randomized(tmp_path, store_server):
    started = time.monotonic()
    rng = random.Random(42)
    engine = make_engine(tmp_path, store_server)
    _add_hypertension_policy(tmp_path / "vault")
    engine = make_engine(tmp_path, store_server, name="vault", extra_keywords=())

    docs, doctors, facilities, conditions = _build_corpus(rng)
    upload = engine.upload_documents(docs)
    assert upload.error_count == 0
    total_rows = sum(
        n for t, n in upload.table_counts.items()
        if t in ("Vital", "Visit_Details", "Medications", "Physical_Therapy_Plans")
    )
    assert total_rows == 1000

    queries = _random_queries(rng, 200, doctors, facilities, conditions)
    diff = engine.oracle_diff(queries)
    elapsed = time.monotonic() - started
    engine.close()
    report(
        "oracle equivalence (200 randomized queries over a 1,000-row corpus)",
        not diff["mismatches"] and elapsed < 60.0,
        f"{diff['total']} queries, {len(diff['mismatches'])} mismatches, {elapsed:.1f}s",
    )


# --- 6. sharing soundness --------------------------------------------------------------------------

def test_sharing_soundness(tmp_path, store_server):
    engine = make_engine(tmp_path, store_server)
    engine.upload_documents(sharing_corpus())
    rs = engine.share("disc herniation")

    released_ok = rs.released_categories == {
        "MRI",
        "X-ray",
        "Medications",
        "Physical_Therapy_Plans",
    }
    med_rows = [r for s in rs.sections if s.table == "Medications" for r in s.rows]
    pt_rows = [r for s in rs.sections if s.table == "Physical_Therapy_Plans" for r in s.rows]
    all_allowlisted = len(med_rows) == 1 and len(pt_rows) == 1 and len(rs.objects) == 2

    leaked_ocd = []
    for section in rs.sections:
        for row in section.rows:
            for cell in row:
                if cell.value is not None and "ocd" in str(cell.value).lower():
                    leaked_ocd.append((section.table, cell.attribute))
    for obj in rs.objects:
        if obj.condition and obj.condition.lower() == "ocd":
            leaked_ocd.append(("object", obj.handle))
    sert = any(
        "sertraline" in str(cell.value).lower()
        for s in rs.sections
        for row in s.rows
        for cell in row
        if cell.value is not None
    )
    engine.close()
    report(
        "sharing soundness (allowlist released, zero unrelated-condition records)",
        released_ok and all_allowlisted and not leaked_ocd and not sert,
        f"categories={sorted(rs.released_categories)}, manifest={len(rs.manifest)}",
    )


# --- 7. process-time enrichment -----------------------------------------------------------------------

def test_process_time_enrichment(tmp_path, store_server):
    engine = make_engine(tmp_path, store_server)
    engine.upload_documents(
        [
            vitals_doc(),
            RawDocument(
                "visit-a.txt",
                b"Date: 11/24/23\nDoctor: R. Chen\nFacility: Ortho\n",
                DocumentFormat.KEYVALUE_TEXT,
                "ortho",
            ),
            RawDocument(
                "visit-b.txt",
                b"Date: 12/20/23\nDoctor: R. Chen\nFacility: Ortho\n",
                DocumentFormat.KEYVALUE_TEXT,
                "ortho",
            ),
        ]
    )
    with_source = engine.query("select Visit_Details where Date = 2023-11-24")
    cells = {b.attribute: b for b in with_source.sections[0].rows[0]}
    filled = (
        cells["Heart Rate"].value == 90
        and cells["Heart Rate"].provenance == "extrapolated"
        and cells["Cholesterol"].value == 220
        and cells["Cholesterol"].provenance == "extrapolated"
    )
    without_source = engine.query("select Visit_Details where Date = 2023-12-20")
    cells2 = {b.attribute: b for b in without_source.sections[0].rows[0]}
    stayed_null = (
        cells2["Heart Rate"].value is None
        and cells2["Heart Rate"].provenance == "source"
        and cells2["Cholesterol"].value is None
    )
    engine.close()
    report(
        "process-time enrichment (same-day fill flagged; no source stays NULL)",
        filled and stayed_null,
        f"filled HR={cells['Heart Rate'].value}, bare HR={cells2['Heart Rate'].value}",
    )


# --- 8. crash consistency --------------------------------------------------------------------------------

def test_crash_consistency(tmp_path, store_server):
    engine = make_engine(tmp_path, store_server)
    engine.upload_documents([vitals_doc()])
    engine.close()

    partials = 0
    trials = 0
    for trial in range(20):
        for stage in PIPELINE_STAGES:
            trials += 1
            marker_year = 2030 + (trial % 5)
            marker = f"Date,Heart Rate,Cholesterol\n{trial % 12 + 1}/1/{marker_year % 100},7{trial % 10},19{trial % 10}\n"
            doc = RawDocument(
                f"t{trial}-{stage}.csv", marker.encode(), DocumentFormat.TABULAR, "x"
            )
            engine = VaultEngine(
                tmp_path / "vault", store=StoreClient("127.0.0.1", store_server.port)
            )
            def hook(s, stage=stage):
                if s == stage:
                    raise RuntimeError(f"injected@{s}")
            engine.fault_hook = hook
            try:
                engine.upload_documents([doc])
                partials += 1  # the injection should have fired
            except RuntimeError:
                pass
            engine.close()

            probe = VaultEngine(
                tmp_path / "vault", store=StoreClient("127.0.0.1", store_server.port)
            )
            rs = probe.query(
                f"select Vital where Date between {marker_year}-01-01 and {marker_year}-12-31"
            )
            visible = sum(len(s.rows) for s in rs.sections)
            base = probe.query("select Vital where Date between 2023-01-01 and 2023-12-31")
            intact = sum(len(s.rows) for s in base.sections) == 4
            probe.close()
            if visible != 0 or not intact:
                partials += 1
    report(
        "crash consistency (6 stages x 20 trials, all-or-nothing per document)",
        partials == 0,
        f"{trials} injected crashes, {partials} partial states",
    )
