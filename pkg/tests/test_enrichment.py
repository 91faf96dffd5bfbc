from datetime import date
from decimal import Decimal
from fractions import Fraction
from math import floor

import pytest
from hypothesis import given, settings, strategies as st

from medvault.config import DEFAULT_ENRICHMENT_POLICIES, DEFAULT_STORAGE_POLICIES, DEFAULT_TABLES
from medvault.enrichment import (
    PROV_AGGREGATE,
    PROV_EXTRAPOLATED,
    PROV_SOURCE,
    LocalIndex,
    apply_ingest_enrichment,
    compute_aggregate,
    extrapolate_at_query,
    maintain_indexes,
)
from medvault.parser import MetadataTag, MetadataTagSet
from medvault.policies import EnrichmentPolicy
from medvault.schema import ensure_tables, make_schema_tags
from medvault.values import Month
from tests.test_schema import registry, tagset

POLICIES = list(DEFAULT_STORAGE_POLICIES)
ENRICH = list(DEFAULT_ENRICHMENT_POLICIES)


def run_enrichment(incoming_pairs, existing_rows):
    """Push one vitals tag set through schema tagging and ingest enrichment."""
    reg = registry()
    ts = tagset(*incoming_pairs)
    ensure_tables(ts, POLICIES, reg)
    tags = make_schema_tags(ts, reg, POLICIES)
    final, prov = apply_ingest_enrichment(
        tags, ENRICH, POLICIES, reg, lambda table, month: [
            r for r in existing_rows if Month.of(r["Date"]) == month
        ]
    )
    return {t.table_name: t for t in final}, prov


def test_november_aggregates_include_existing_and_incoming_rows():
    # existing 11/5 row (100, 200) plus incoming 11/24 row (90, 220)
    by_table, prov = run_enrichment(
        [("Date", date(2023, 11, 24)), ("Heart Rate", 90), ("Cholesterol", 220)],
        [{"Date": date(2023, 11, 5), "Heart Rate": 100, "Cholesterol": 200}],
    )
    avg = by_table["Monthly_Avg_Vitals"]
    assert avg.get("Date") == Month(2023, 11)
    assert avg.get("Heart Rate") == 95
    assert avg.get("Cholesterol") == 210
    high = by_table["Monthly_High_Cholesterol"]
    assert high.get("Cholesterol") == 220
    assert prov[("Monthly_Avg_Vitals", "Heart Rate")] == PROV_AGGREGATE
    assert prov[("Monthly_High_Cholesterol", "Cholesterol")] == PROV_AGGREGATE
    # base tag passes through untouched
    assert by_table["Vital"].get("Heart Rate") == 90


def test_october_aggregates():
    by_table, _ = run_enrichment(
        [("Date", date(2023, 10, 10)), ("Heart Rate", 80), ("Cholesterol", 150)],
        [{"Date": date(2023, 10, 1), "Heart Rate": 90, "Cholesterol": 190}],
    )
    avg = by_table["Monthly_Avg_Vitals"]
    assert (avg.get("Heart Rate"), avg.get("Cholesterol")) == (85, 170)
    assert by_table["Monthly_High_Cholesterol"].get("Cholesterol") == 190


def test_first_row_of_month_aggregates_to_itself():
    by_table, _ = run_enrichment(
        [("Date", date(2024, 1, 3)), ("Heart Rate", 71), ("Cholesterol", 183)], []
    )
    avg = by_table["Monthly_Avg_Vitals"]
    assert (avg.get("Heart Rate"), avg.get("Cholesterol")) == (71, 183)
    assert by_table["Monthly_High_Cholesterol"].get("Cholesterol") == 183


def test_average_rounds_half_up_to_integer_unit():
    by_table, _ = run_enrichment(
        [("Date", date(2024, 1, 9)), ("Heart Rate", 91), ("Cholesterol", 200)],
        [{"Date": date(2024, 1, 2), "Heart Rate": 90, "Cholesterol": 201}],
    )
    avg = by_table["Monthly_Avg_Vitals"]
    assert avg.get("Heart Rate") == 91  # 90.5 rounds half-up
    assert avg.get("Cholesterol") == 201  # 200.5 rounds half-up


def test_compute_aggregate_decimal_unit():
    rows = [{"Weight": Decimal("70.10")}, {"Weight": Decimal("70.15")}]
    assert compute_aggregate("monthly_avg", "Weight", rows, "decimal") == Decimal("70.13")


@settings(max_examples=60)
@given(
    st.lists(
        st.tuples(
            st.dates(min_value=date(2023, 1, 1), max_value=date(2023, 12, 31)),
            st.integers(min_value=40, max_value=200),
            st.integers(min_value=100, max_value=320),
        ),
        min_size=1,
        max_size=25,
    )
)
def test_aggregate_consistency_against_brute_force(rows):
    """Monthly values equal an independent Fraction-arithmetic recompute."""
    incoming_date, hr, chol = rows[-1]
    existing = [
        {"Date": d, "Heart Rate": h, "Cholesterol": c} for d, h, c in rows[:-1]
    ]
    by_table, _ = run_enrichment(
        [("Date", incoming_date), ("Heart Rate", hr), ("Cholesterol", chol)], existing
    )
    month_rows = [r for r in existing if Month.of(r["Date"]) == Month.of(incoming_date)]
    month_rows.append({"Date": incoming_date, "Heart Rate": hr, "Cholesterol": chol})
    for column in ("Heart Rate", "Cholesterol"):
        values = [r[column] for r in month_rows]
        expected = int(floor(Fraction(sum(values), len(values)) + Fraction(1, 2)))
        assert by_table["Monthly_Avg_Vitals"].get(column) == expected
    assert by_table["Monthly_High_Cholesterol"].get("Cholesterol") == max(
        r["Cholesterol"] for r in month_rows
    )


# --- query-time extrapolation ---------------------------------------------------

PROCESS = EnrichmentPolicy("process_time", "Vital", "Visit_Details", "same_day_extrapolation")
FILLABLE = ("Heart Rate", "Cholesterol", "Weight")


def visit(handle, d, hr=None, time=None):
    row = {"Date": d, "Doctor": "R. Chen", "Heart Rate": hr, "Cholesterol": None}
    if time is not None:
        row["Time"] = time
    return (handle, row)


def test_same_day_fill_flagged_extrapolated():
    sources = {date(2023, 11, 24): [{"Date": date(2023, 11, 24), "Heart Rate": 90, "Time": None}]}
    rows, proposals = extrapolate_at_query(
        "Visit_Details",
        [visit(1, date(2023, 11, 24))],
        PROCESS,
        lambda t, d: sources.get(d, []),
        FILLABLE,
    )
    cell = rows[0]["Heart Rate"]
    assert cell.value == 90
    assert cell.provenance == PROV_EXTRAPOLATED
    assert len(proposals) == 1
    assert proposals[0].column == "Heart Rate"
    assert proposals[0].row_handle == 1


def test_no_same_day_source_leaves_null():
    rows, proposals = extrapolate_at_query(
        "Visit_Details",
        [visit(1, date(2023, 11, 24))],
        PROCESS,
        lambda t, d: [],
        FILLABLE,
    )
    cell = rows[0]["Heart Rate"]
    assert cell.value is None
    assert cell.provenance == PROV_SOURCE
    assert proposals == []


def test_nearest_timestamp_wins_and_ties_break_earlier():
    # brute-force the expectation over the fixture: visit 09:00, sources at
    # 08:00 and 17:00 -> 08:00 is nearer
    day = date(2023, 11, 24)
    sources = [
        {"Date": day, "Heart Rate": 58, "Time": "08:00"},
        {"Date": day, "Heart Rate": 77, "Time": "17:00"},
    ]
    from medvault.values import combine_date_time

    visit_moment = combine_date_time(day, "09:00")
    best = min(
        sources,
        key=lambda s: (abs(combine_date_time(day, s["Time"]) - visit_moment),
                       combine_date_time(day, s["Time"])),
    )
    rows, _ = extrapolate_at_query(
        "Visit_Details",
        [visit(1, day, time="09:00")],
        PROCESS,
        lambda t, d: sources,
        FILLABLE,
    )
    assert rows[0]["Heart Rate"].value == best["Heart Rate"] == 58

    # equidistant at 08:00 and 10:00 from 09:00: earlier row wins
    sources_tie = [
        {"Date": day, "Heart Rate": 61, "Time": "10:00"},
        {"Date": day, "Heart Rate": 59, "Time": "08:00"},
    ]
    rows, _ = extrapolate_at_query(
        "Visit_Details",
        [visit(1, day, time="09:00")],
        PROCESS,
        lambda t, d: sources_tie,
        FILLABLE,
    )
    assert rows[0]["Heart Rate"].value == 59


def test_extrapolation_never_overwrites_source_values():
    sources = [{"Date": date(2023, 11, 24), "Heart Rate": 90, "Time": None}]
    rows, proposals = extrapolate_at_query(
        "Visit_Details",
        [visit(1, date(2023, 11, 24), hr=64)],
        PROCESS,
        lambda t, d: sources,
        FILLABLE,
    )
    assert rows[0]["Heart Rate"].value == 64
    assert rows[0]["Heart Rate"].provenance == PROV_SOURCE
    assert all(p.column != "Heart Rate" for p in proposals)


def test_rejected_targets_are_skipped():
    sources = [{"Date": date(2023, 11, 24), "Heart Rate": 90, "Time": None}]
    rows, proposals = extrapolate_at_query(
        "Visit_Details",
        [visit(7, date(2023, 11, 24))],
        PROCESS,
        lambda t, d: sources,
        FILLABLE,
        skip_targets={(7, "Heart Rate")},
    )
    assert rows[0]["Heart Rate"].value is None
    assert proposals == []


@settings(max_examples=40)
@given(st.integers(min_value=40, max_value=200))
def test_fill_only_changes_null_cells(existing_hr):
    sources = [{"Date": date(2023, 11, 24), "Heart Rate": 90, "Time": None}]
    rows, _ = extrapolate_at_query(
        "Visit_Details",
        [visit(1, date(2023, 11, 24), hr=existing_hr)],
        PROCESS,
        lambda t, d: sources,
        FILLABLE,
    )
    assert rows[0]["Heart Rate"].value == existing_hr


# --- local indexes ---------------------------------------------------------------------

TABLE1A = [
    (1, {"Date": date(2023, 10, 1), "Cholesterol": 190}),
    (2, {"Date": date(2023, 10, 10), "Cholesterol": 150}),
    (3, {"Date": date(2023, 11, 5), "Cholesterol": 200}),
    (4, {"Date": date(2023, 11, 24), "Cholesterol": 220}),
]


def test_date_index_range_over_november():
    indexes = {}
    maintain_indexes(indexes, "Vital", TABLE1A, [("Vital", "Date")])
    idx = indexes[("Vital", "Date")]
    assert idx.range(date(2023, 11, 1), date(2023, 11, 30)) == [3, 4]


def test_empty_range_returns_nothing():
    indexes = {}
    maintain_indexes(indexes, "Vital", TABLE1A, [("Vital", "Date")])
    assert indexes[("Vital", "Date")].range(date(2022, 1, 1), date(2022, 12, 31)) == []


def test_duplicate_values_share_a_key():
    idx = LocalIndex("Vital", "Heart Rate")
    idx.add(90, 1)
    idx.add(90, 4)
    assert idx.lookup(90) == {1, 4}
    idx.remove_handle(1)
    assert idx.lookup(90) == {4}
    idx.remove_handle(4)
    assert idx.lookup(90) == set()
    assert idx.range(0, 1000) == []


def test_index_json_round_trip():
    indexes = {}
    maintain_indexes(indexes, "Vital", TABLE1A, [("Vital", "Cholesterol")])
    idx = indexes[("Vital", "Cholesterol")]
    clone = LocalIndex.from_json(idx.to_json())
    assert clone.range(150, 200) == idx.range(150, 200) == [2, 1, 3]
    assert clone.value_of(4) == 220


def test_null_cells_never_enter_indexes():
    indexes = {}
    maintain_indexes(
        indexes, "Vital", [(9, {"Date": None, "Cholesterol": 150})], [("Vital", "Date")]
    )
    assert len(indexes[("Vital", "Date")]) == 0
