import string
from datetime import date, datetime, timezone
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from medvault.errors import (
    EmptyDocument,
    MalformedTabular,
    MissingTimestampColumn,
    UnknownFormat,
)
from medvault.parser import (
    DEFAULT_KEYWORDS,
    DocumentFormat,
    KeywordDictionary,
    MetadataTagSet,
    RawDocument,
    ingest_object,
    normalize_keyword,
    parse_record,
    parse_timeseries,
    read_manifest,
)

KW = KeywordDictionary()


def tab(doc_id, text):
    return RawDocument(doc_id, text.encode(), DocumentFormat.TABULAR, "test")


def kv(doc_id, text):
    return RawDocument(doc_id, text.encode(), DocumentFormat.KEYVALUE_TEXT, "test")


def test_tabular_row_yields_reserved_tags():
    sets = parse_record(tab("d", "Date,Heart Rate,Cholesterol\n11/24/23,90,220\n"), KW)
    assert len(sets) == 1
    tags = {t.keyword: t.value for t in sets[0].tags}
    assert tags == {"Date": date(2023, 11, 24), "Heart Rate": 90, "Cholesterol": 220}


def test_free_text_falls_back_to_description():
    sets = parse_record(kv("d", "patient reports mild dizziness"), KW)
    tags = {t.keyword: t.value for t in sets[0].tags}
    assert tags == {"Description": "patient reports mild dizziness"}


def test_empty_document_rejected():
    with pytest.raises(EmptyDocument):
        parse_record(kv("d", "   \n  "), KW)
    with pytest.raises(EmptyDocument):
        parse_record(tab("d", ""), KW)


def test_malformed_tabular_arity():
    with pytest.raises(MalformedTabular):
        parse_record(tab("d", "Date,Heart Rate\n11/24/23,90,220\n"), KW)


def test_keyword_matching_is_case_and_spacing_insensitive():
    for header in ("heart rate", "HEART RATE", "Heart  Rate", " heart rate "):
        sets = parse_record(tab("d", f"{header}\n92\n"), KW)
        assert sets[0].tags[0].keyword == "Heart Rate"
    assert normalize_keyword("HEART  RATE") == "heart rate"


def test_keyvalue_mixed_tags_and_free_text():
    text = "Date: 11/24/23\nDoctor: R. Chen\nfelt fine after the walk\n"
    sets = parse_record(kv("d", text), KW)
    tags = {t.keyword: t.value for t in sets[0].tags}
    assert tags["Date"] == date(2023, 11, 24)
    assert tags["Doctor"] == "R. Chen"
    assert tags["Description"] == "felt fine after the walk"


def test_unreserved_key_lines_go_to_description():
    sets = parse_record(kv("d", "Shoe Size: 42\n"), KW)
    tags = {t.keyword: t.value for t in sets[0].tags}
    assert list(tags) == ["Description"]
    assert "Shoe Size: 42" in tags["Description"]


def test_tabular_unreserved_columns_preserved_in_description():
    sets = parse_record(tab("d", "Date,Mood\n11/24/23,good\n"), KW)
    tags = {t.keyword: t.value for t in sets[0].tags}
    assert tags["Date"] == date(2023, 11, 24)
    assert tags["Description"] == "Mood: good"


# --- determinism and row fidelity -----------------------------------------------

_cell = st.text(alphabet=string.ascii_letters + string.digits + " ", min_size=1, max_size=12).map(
    str.strip
).filter(bool)


@settings(max_examples=40)
@given(
    rows=st.lists(st.tuples(_cell, _cell, _cell), min_size=1, max_size=8),
)
def test_tabular_row_fidelity(rows):
    header = "Date,Heart Rate,Wingspan"  # two reserved, one not
    body = "\n".join(",".join(r) for r in rows)
    doc = tab("d", f"{header}\n{body}\n")
    sets = parse_record(doc, KW)
    assert len(sets) == len(rows)  # one tag set per data row
    for row, tag_set in zip(rows, sets):
        tags = {t.keyword: t.value for t in tag_set.tags}
        from medvault.values import parse_scalar

        assert tags["Date"] == parse_scalar(row[0])
        assert tags["Heart Rate"] == parse_scalar(row[1])
        assert f"Wingspan: {row[2]}" in str(tags["Description"])
    again = parse_record(doc, KW)
    assert again == sets  # determinism


def test_every_accepted_document_has_at_least_one_tag():
    for text in ("only text", "Date: 11/24/23", "Unknown: thing"):
        sets = parse_record(kv("d", text), KW)
        assert all(len(s.tags) >= 1 for s in sets)


# --- timeseries -------------------------------------------------------------------

def ts(doc_id, text):
    return RawDocument(doc_id, text.encode(), DocumentFormat.TIMESERIES, "watch")


def test_timeseries_one_tagset_per_sample():
    doc = ts("d", "resting-heart-rate\n2023-11-24T08:00:00,58\n2023-11-24T09:00:00,61\n")
    sets = parse_timeseries(doc)
    assert len(sets) == 2
    for s, expected in zip(sets, (58, 61)):
        stream_tags = [t for t in s.tags if t.keyword == "resting-heart-rate"]
        assert len(stream_tags) == 1
        assert stream_tags[0].value == expected
        assert stream_tags[0].observed_at is not None


def test_timeseries_single_sample():
    sets = parse_timeseries(ts("d", "steps\n2023-11-24T08:00:00,4000\n"))
    assert len(sets) == 1


def test_timeseries_missing_timestamp():
    with pytest.raises(MissingTimestampColumn):
        parse_timeseries(ts("d", "steps\n4000\n"))
    with pytest.raises(MissingTimestampColumn):
        parse_timeseries(ts("d", "steps\nyesterday,4000\n"))


# --- opaque objects ------------------------------------------------------------------

def test_object_with_sidecar_date():
    doc = RawDocument(
        "xray.bin",
        b"\x89IMG",
        DocumentFormat.OPAQUE_BINARY,
        "imaging",
        sidecar=b"Date: 11/24/23\n",
        object_class_hint="X-ray",
    )
    tags = {t.keyword: t.value for t in ingest_object(doc, KW).tags}
    assert tags["ObjectClass"] == "X-ray"
    assert tags["Date"] == date(2023, 11, 24)


def test_object_without_sidecar_uses_upload_date():
    uploaded = datetime(2024, 2, 2, 10, 0, tzinfo=timezone.utc)
    doc = RawDocument(
        "mri.bin",
        b"\x89IMG",
        DocumentFormat.OPAQUE_BINARY,
        "imaging",
        upload_time=uploaded,
        object_class_hint="MRI",
    )
    tags = {t.keyword: t.value for t in ingest_object(doc, KW).tags}
    assert tags["ObjectClass"] == "MRI"
    assert tags["Date"] == date(2024, 2, 2)


def test_zero_byte_object_rejected():
    doc = RawDocument("junk.bin", b"", DocumentFormat.OPAQUE_BINARY, "imaging")
    with pytest.raises(EmptyDocument):
        ingest_object(doc, KW)


# --- dictionary and manifest -----------------------------------------------------------

def test_keyword_dictionary_file_round_trip(tmp_path):
    path = tmp_path / "kw.txt"
    KeywordDictionary(DEFAULT_KEYWORDS).to_file(path)
    loaded = KeywordDictionary.from_file(path)
    assert loaded.match("heart rate") == "Heart Rate"
    assert loaded.match("unknown thing") is None


def test_manifest_parsing(tmp_path):
    (tmp_path / "a.csv").write_text("Date\n11/24/23\n")
    (tmp_path / "b.bin").write_bytes(b"\x00stuff")
    (tmp_path / "b.bin.sidecar.txt").write_text("Date: 11/24/23\n")
    manifest = tmp_path / "manifest.txt"
    manifest.write_text(
        "# comment\n"
        "a.csv|tabular|clinic\n"
        "b.bin|opaque_binary|imaging|X-ray\n"
    )
    entries = read_manifest(manifest)
    assert len(entries) == 2
    assert entries[0].declared_format == DocumentFormat.TABULAR
    assert entries[1].object_class == "X-ray"

    from medvault.parser import load_documents

    docs = load_documents(entries)
    assert docs[1].sidecar is not None


def test_manifest_rejects_unknown_format(tmp_path):
    manifest = tmp_path / "manifest.txt"
    manifest.write_text("a.pdf|parchment|clinic\n")
    with pytest.raises(UnknownFormat):
        read_manifest(manifest)
