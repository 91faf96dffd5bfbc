"""Upload parsing: raw documents in, metadata tag sets out.

Four canonical formats are accepted:

* tabular: comma-separated with a header row; one tag set per data row.
* keyvalue_text: "Key: value" lines plus free text.
* timeseries: first line names the stream, then "timestamp,value" samples.
* opaque_binary: stored unmodified; an optional sidecar in keyvalue form
  supplies tags such as the capture date.

Reserved keywords come from an editable dictionary; anything that matches
no keyword is preserved under a generic Description tag, so every accepted
document yields at least one tag.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from .errors import EmptyDocument, MalformedTabular, MissingTimestampColumn, UnknownFormat
from .values import Scalar, parse_scalar


class DocumentFormat(str, Enum):
    TABULAR = "tabular"
    KEYVALUE_TEXT = "keyvalue_text"
    TIMESERIES = "timeseries"
    OPAQUE_BINARY = "opaque_binary"


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    content: bytes
    declared_format: DocumentFormat
    source_label: str = ""
    upload_time: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    sidecar: Optional[bytes] = None
    object_class_hint: Optional[str] = None


@dataclass(frozen=True)
class MetadataTag:
    keyword: str
    value: Scalar
    observed_at: Optional[datetime] = None


@dataclass(frozen=True)
class MetadataTagSet:
    doc_id: str
    tags: tuple[MetadataTag, ...]

    def keywords(self) -> list[str]:
        return [t.keyword for t in self.tags]

    def get(self, keyword: str) -> Optional[Scalar]:
        for t in self.tags:
            if t.keyword == keyword:
                return t.value
        return None


DESCRIPTION = "Description"
OBJECT_CLASS = "ObjectClass"

DEFAULT_KEYWORDS = (
    "Date",
    "Heart Rate",
    "Cholesterol",
    "BMI",
    "Weight",
    "Height",
    "Blood Pressure",
    "Doctor",
    "Facility",
    "Description",
    "ObjectClass",
)


def normalize_keyword(text: str) -> str:
    """Case- and spacing-insensitive keyword form."""
    return re.sub(r"\s+", " ", text.strip()).lower()


class KeywordDictionary:
    """Reserved medical keywords in canonical case, matched insensitively."""

    def __init__(self, canonical: Iterable[str] = DEFAULT_KEYWORDS) -> None:
        self._by_norm = {}
        for kw in canonical:
            kw = kw.strip()
            if kw:
                self._by_norm[normalize_keyword(kw)] = kw

    def match(self, surface: str) -> Optional[str]:
        return self._by_norm.get(normalize_keyword(surface))

    def canonical(self) -> list[str]:
        return sorted(self._by_norm.values())

    def add(self, keyword: str) -> None:
        self._by_norm[normalize_keyword(keyword)] = keyword.strip()

    @classmethod
    def from_file(cls, path: Path) -> "KeywordDictionary":
        lines = Path(path).read_text().splitlines()
        return cls(ln for ln in lines if ln.strip() and not ln.strip().startswith("#"))

    def to_file(self, path: Path) -> None:
        Path(path).write_text("\n".join(self.canonical()) + "\n")


def _require_content(doc: RawDocument) -> str:
    if not doc.content or not doc.content.strip():
        raise EmptyDocument(f"{doc.doc_id}: document has no content")
    try:
        return doc.content.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise EmptyDocument(f"{doc.doc_id}: undecodable text content") from exc


def parse_record(doc: RawDocument, keywords: KeywordDictionary) -> List[MetadataTagSet]:
    """Tag extraction for tabular and key-value documents.

    Tabular input yields one tag set per data row; key-value input yields a
    single tag set. Cells or lines that match no reserved keyword are
    preserved verbatim in one Description tag per tag set.
    """
    if doc.declared_format == DocumentFormat.TABULAR:
        return _parse_tabular(doc, keywords)
    if doc.declared_format == DocumentFormat.KEYVALUE_TEXT:
        return [_parse_keyvalue(doc, keywords)]
    raise UnknownFormat(f"parse_record cannot handle {doc.declared_format.value}")


def _parse_tabular(doc: RawDocument, keywords: KeywordDictionary) -> List[MetadataTagSet]:
    text = _require_content(doc)
    rows = [row for row in csv.reader(io.StringIO(text)) if any(cell.strip() for cell in row)]
    if not rows:
        raise EmptyDocument(f"{doc.doc_id}: no rows")
    header = [cell.strip() for cell in rows[0]]
    matched = [keywords.match(h) for h in header]
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MalformedTabular(
                f"{doc.doc_id}: row {lineno} has {len(row)} cells, header has {len(header)}"
            )
        tags: list[MetadataTag] = []
        leftovers: list[str] = []
        for head, canon, cell in zip(header, matched, row):
            cell = cell.strip()
            if not cell:
                continue
            if canon is not None:
                tags.append(MetadataTag(canon, parse_scalar(cell)))
            else:
                leftovers.append(f"{head}: {cell}")
        if leftovers:
            tags.append(MetadataTag(DESCRIPTION, "; ".join(leftovers)))
        if not tags:
            tags.append(MetadataTag(DESCRIPTION, ""))
        out.append(MetadataTagSet(doc.doc_id, tuple(tags)))
    if not out:
        raise EmptyDocument(f"{doc.doc_id}: header but no data rows")
    return out


_KV_LINE = re.compile(r"^\s*([^:]{1,80}?)\s*:\s*(.*\S)\s*$")


def _parse_keyvalue(doc: RawDocument, keywords: KeywordDictionary) -> MetadataTagSet:
    text = _require_content(doc)
    tags: list[MetadataTag] = []
    free: list[str] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        m = _KV_LINE.match(line)
        canon = keywords.match(m.group(1)) if m else None
        if m and canon is not None:
            tags.append(MetadataTag(canon, parse_scalar(m.group(2))))
        else:
            free.append(line.strip())
    if free:
        tags.append(MetadataTag(DESCRIPTION, " ".join(free)))
    if not tags:
        raise EmptyDocument(f"{doc.doc_id}: nothing extractable")
    return MetadataTagSet(doc.doc_id, tuple(tags))


def parse_timeseries(doc: RawDocument) -> List[MetadataTagSet]:
    """One tag set per sample; the stream header names the keyword and each
    tag's observed_at carries the sample timestamp."""
    if doc.declared_format != DocumentFormat.TIMESERIES:
        raise UnknownFormat(f"not a timeseries document: {doc.declared_format.value}")
    text = _require_content(doc)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise EmptyDocument(f"{doc.doc_id}: stream has no samples")
    stream = lines[0].strip().strip(",")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise MissingTimestampColumn(
                f"{doc.doc_id}: line {lineno} is not 'timestamp,value'"
            )
        ts = _parse_timestamp(parts[0])
        if ts is None:
            raise MissingTimestampColumn(f"{doc.doc_id}: line {lineno}: bad timestamp {parts[0]!r}")
        tags = (
            MetadataTag("Date", ts.date(), observed_at=ts),
            MetadataTag(stream, parse_scalar(parts[1]), observed_at=ts),
        )
        out.append(MetadataTagSet(doc.doc_id, tags))
    return out


def _parse_timestamp(text: str) -> Optional[datetime]:
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        return None


def ingest_object(doc: RawDocument, keywords: KeywordDictionary) -> MetadataTagSet:
    """Tags for an opaque binary: object class, capture date (sidecar date,
    else upload date), and whatever else the sidecar provides. The binary
    itself is routed to object storage unmodified."""
    if not doc.content:
        raise EmptyDocument(f"{doc.doc_id}: zero-byte object")
    tags: list[MetadataTag] = []
    if doc.sidecar and doc.sidecar.strip():
        side = replace(doc, content=doc.sidecar, declared_format=DocumentFormat.KEYVALUE_TEXT)
        tags.extend(_parse_keyvalue(side, keywords).tags)
    by_kw = {t.keyword for t in tags}
    if OBJECT_CLASS not in by_kw:
        tags.insert(0, MetadataTag(OBJECT_CLASS, doc.object_class_hint or "Document"))
    if "Date" not in by_kw:
        tags.append(MetadataTag("Date", doc.upload_time.date()))
    return MetadataTagSet(doc.doc_id, tuple(tags))


def parse_document(doc: RawDocument, keywords: KeywordDictionary) -> List[MetadataTagSet]:
    """Route a document to the right parser by declared format."""
    if doc.declared_format == DocumentFormat.OPAQUE_BINARY:
        return [ingest_object(doc, keywords)]
    if doc.declared_format == DocumentFormat.TIMESERIES:
        return parse_timeseries(doc)
    return parse_record(doc, keywords)


# --- ingestion manifest -------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    declared_format: DocumentFormat
    source_label: str
    object_class: Optional[str] = None


def read_manifest(path: Path) -> List[ManifestEntry]:
    """One document per line: path|format|source_label[|object_class].
    Relative paths resolve against the manifest's directory. Lines starting
    with # are comments. Unknown formats reject the whole manifest."""
    base = Path(path).parent
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) not in (3, 4):
            raise UnknownFormat(f"manifest line {lineno}: expected 3 or 4 fields")
        try:
            fmt = DocumentFormat(parts[1])
        except ValueError:
            raise UnknownFormat(f"manifest line {lineno}: unknown format {parts[1]!r}") from None
        doc_path = Path(parts[0])
        if not doc_path.is_absolute():
            doc_path = base / doc_path
        entries.append(
            ManifestEntry(doc_path, fmt, parts[2], parts[3] if len(parts) == 4 else None)
        )
    return entries


def load_documents(entries: Sequence[ManifestEntry]) -> List[RawDocument]:
    docs = []
    for i, e in enumerate(entries):
        sidecar_path = e.path.with_name(e.path.name + ".sidecar.txt")
        docs.append(
            RawDocument(
                doc_id=f"{e.path.name}#{i}",
                content=e.path.read_bytes(),
                declared_format=e.declared_format,
                source_label=e.source_label,
                sidecar=sidecar_path.read_bytes() if sidecar_path.exists() else None,
                object_class_hint=e.object_class,
            )
        )
    return docs
