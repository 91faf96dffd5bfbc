"""Query engine behavior over a live (thread-local) store: template parsing,
derived-table preference, encrypted predicates, extrapolation, sharing."""

from datetime import date
from decimal import Decimal

import pytest

from medvault.errors import UnrecognizedQuery
from medvault.queries import parse_query
from medvault.values import Month
from tests.conftest import kv_doc, make_engine, sharing_corpus, vitals_doc


@pytest.fixture
def loaded(engine):
    engine.upload_documents(sharing_corpus())
    return engine


# --- parsing ---------------------------------------------------------------------

def test_parse_plain_aggregate(loaded):
    q = parse_query(
        "what was my maximum cholesterol in November 2023",
        loaded.registry,
        loaded.bundle.synonyms,
    )
    assert q.kind == "aggregate"
    assert q.aggregate == ("max", "Cholesterol")
    assert q.month == Month(2023, 11)


def test_parse_condition_select_loose_phrasing(loaded):
    q = parse_query("retrieve records on to disc herniation", loaded.registry, loaded.bundle.synonyms)
    assert q.kind == "select"
    assert q.scope_kind == "condition"
    assert q.scope == "disc herniation"


def test_parse_share(loaded):
    q = parse_query("share disc herniation", loaded.registry, loaded.bundle.synonyms)
    assert q.kind == "share"
    assert q.scope == "disc herniation"


def test_parse_unrecognized_lists_templates(loaded):
    with pytest.raises(UnrecognizedQuery) as err:
        parse_query("foo bar", loaded.registry, loaded.bundle.synonyms)
    assert "supported templates" in str(err.value)


def test_parse_structured_select_with_between(loaded):
    q = parse_query(
        "select Vital where Date between 2023-10-01 and 2023-10-31",
        loaded.registry,
        loaded.bundle.synonyms,
    )
    assert q.scope == "Vital"
    assert q.filters[0].op == "between"
    assert q.filters[0].literal == date(2023, 10, 1)


def test_parse_synonym_column(loaded):
    q = parse_query("what was my average hr in October 2023", loaded.registry, loaded.bundle.synonyms)
    assert q.aggregate == ("avg", "Heart Rate")
    assert q.month == Month(2023, 10)


def test_parse_doctor_template(loaded):
    q = parse_query("records from doctor R. Chen", loaded.registry, loaded.bundle.synonyms)
    assert q.filters[0].column == "Doctor"
    assert q.filters[0].literal == "R. Chen"


# --- execution -------------------------------------------------------------------

def test_max_cholesterol_served_from_derived_table(loaded):
    rs = loaded.query("what was my maximum cholesterol in November 2023")
    assert rs.value == 220
    assert rs.value_provenance == "computed_aggregate"
    # derived-table preference: one point scan, no base range scan
    assert rs.plan.has("store_point_scan", table="Monthly_High_Cholesterol")
    assert not rs.plan.has("store_range_scan", table="Vital")
    assert len([s for s in rs.plan.steps if s.kind.startswith("store_")]) == 1


def test_avg_heart_rate_october(loaded):
    rs = loaded.query("aggregate avg Heart Rate over Vital in 2023-10")
    assert rs.value == 85
    assert rs.plan.has("store_point_scan", table="Monthly_Avg_Vitals")


def test_aggregate_month_without_data(loaded):
    rs = loaded.query("aggregate avg Heart Rate over Vital in 2021-01")
    assert rs.value is None


def test_aggregate_without_derived_table_falls_back_to_range_scan(loaded):
    loaded.upload_documents(
        [kv_doc("visit-w.txt", "Date: 11/24/23\nDoctor: R. Chen\nFacility: Ortho\nWeight: 72.5\n")]
    )
    rs = loaded.query("aggregate avg Weight over Visit_Details in 2023-11")
    assert rs.value == Decimal("72.5")
    assert rs.plan.has("store_range_scan", table="Visit_Details")


def test_select_date_range_matches_reference(loaded):
    rs = loaded.query("records from 10/1/23 to 10/31/23")
    vital = next(s for s in rs.sections if s.table == "Vital")
    assert len(vital.rows) == 2
    diff = loaded.oracle_diff(["records from 10/1/23 to 10/31/23"])
    assert diff["mismatches"] == []


def test_strict_comparison_filters_locally(loaded):
    rs = loaded.query("select Vital where Cholesterol > 190")
    values = {
        next(b.value for b in row if b.attribute == "Cholesterol")
        for s in rs.sections
        for row in s.rows
    }
    assert values == {200, 220}
    assert rs.plan.has("local_filter", table="Vital")


def test_point_scan_on_doctor(loaded):
    loaded.upload_documents(
        [kv_doc("visit.txt", "Date: 11/24/23\nDoctor: R. Chen\nFacility: Ortho\n")]
    )
    rs = loaded.query("records from doctor R. Chen")
    assert any(s.table == "Visit_Details" and len(s.rows) == 1 for s in rs.sections)
    assert rs.plan.has("store_point_scan", table="Visit_Details", column="Doctor")


def test_visit_query_extrapolates_same_day_vitals(loaded):
    loaded.upload_documents(
        [kv_doc("visit.txt", "Date: 11/24/23\nDoctor: R. Chen\nFacility: Ortho\n")]
    )
    rs = loaded.query("select Visit_Details where Date = 2023-11-24")
    section = rs.sections[0]
    cells = {b.attribute: b for b in section.rows[0]}
    assert cells["Heart Rate"].value == 90
    assert cells["Heart Rate"].provenance == "extrapolated"
    assert cells["Cholesterol"].value == 220
    assert cells["Cholesterol"].provenance == "extrapolated"
    assert rs.plan.has("enrich", table="Visit_Details", source="Vital")
    assert ("Visit_Details", 0, "Heart Rate") in rs.extrapolated_cells()


def test_visit_without_same_day_source_stays_null(loaded):
    loaded.upload_documents(
        [kv_doc("visit2.txt", "Date: 12/20/23\nDoctor: R. Chen\nFacility: Ortho\n")]
    )
    rs = loaded.query("select Visit_Details where Date = 2023-12-20")
    cells = {b.attribute: b for b in rs.sections[0].rows[0]}
    assert cells["Heart Rate"].value is None
    assert cells["Heart Rate"].provenance == "source"


# --- sharing -----------------------------------------------------------------------

def test_share_releases_allowlist_and_excludes_other_condition(loaded):
    rs = loaded.share("disc herniation")
    assert rs.status == "ok"
    assert rs.released_categories == {"MRI", "X-ray", "Medications", "Physical_Therapy_Plans"}
    released_tables = {s.table for s in rs.sections}
    assert released_tables == {"Medications", "Physical_Therapy_Plans"}
    meds = next(s for s in rs.sections if s.table == "Medications")
    med_names = {
        next(b.value for b in row if b.attribute == "Medication") for row in meds.rows
    }
    assert med_names == {"Naproxen"}  # the OCD prescription is absent
    assert {o.object_class for o in rs.objects} == {"MRI", "X-ray"}
    # the OCD-condition brain MRI is excluded even though MRI is allowlisted
    assert all(o.condition == "disc herniation" for o in rs.objects)
    assert len(rs.manifest) == len(meds.rows) + 1 + len(rs.objects)


def test_share_unknown_condition_needs_user_input(loaded):
    rs = loaded.share("toe fracture")
    assert rs.status == "needs_user_input"
    assert rs.sections == [] and rs.objects == []


def test_share_empty_corpus_succeeds_with_empty_manifest(engine):
    rs = engine.share("disc herniation")
    assert rs.status == "ok"
    assert rs.manifest == []
    assert rs.released_categories == set()


def test_condition_select_routes_through_sharing_policy(loaded):
    rs = loaded.query("records about disc herniation")
    assert {s.table for s in rs.sections} == {"Medications", "Physical_Therapy_Plans"}
    assert {o.object_class for o in rs.objects} == {"MRI", "X-ray"}


def test_share_soundness_released_subset_of_allowlist(loaded):
    rs = loaded.share("disc herniation")
    allowed = {c.lower() for c in loaded.policy_store.lookup_sharing("disc herniation").policy.included}
    for entry in rs.manifest:
        assert entry.category.lower() in allowed


# --- bookkeeping ----------------------------------------------------------------------

def test_query_shapes_are_recorded(loaded):
    before = dict(loaded.policy_store.patterns)
    loaded.query("what was my maximum cholesterol in November 2023")
    shape = "aggregate:max:Cholesterol:Vital:month"
    assert loaded.policy_store.patterns.get(shape, 0) == before.get(shape, 0) + 1


def test_predicate_literals_never_reach_store_in_plaintext(loaded):
    loaded.upload_documents(
        [kv_doc("visit.txt", "Date: 11/24/23\nDoctor: Zebrastripe Quagga\nFacility: Ortho\n")]
    )
    loaded.query("records from doctor Zebrastripe Quagga")
    log = b"".join(e.raw for e in loaded.dump_store_log())
    assert b"Zebrastripe Quagga" not in log
    assert b"disc herniation" not in log


def test_oracle_equivalence_on_mixed_small_batch(loaded):
    queries = [
        "what was my maximum cholesterol in November 2023",
        "aggregate avg Cholesterol over Vital in 2023-10",
        "aggregate min Heart Rate over Vital in 2023-11",
        "select Vital where Cholesterol between 150 and 200",
        "records from 2023-11-01 to 2023-11-30",
        "share disc herniation",
        "records about disc herniation",
        "share toe fracture",
    ]
    diff = loaded.oracle_diff(queries)
    assert diff["mismatches"] == []
