"""Typed scalar values used throughout the vault.

A cell value is one of: calendar date, calendar month, integer, decimal,
or text. Dates are normalized to ISO internally; months display as MM/YY
at the UI but serialize as YYYY-MM. Every scalar has a canonical byte
encoding consumed by the encryption layer, so equal values always encrypt
to comparable ciphertexts.
"""

from __future__ import annotations

import calendar
import functools
import re
from dataclasses import dataclass
from datetime import date, datetime
from decimal import Decimal, InvalidOperation
from typing import Optional, Union


@functools.total_ordering
@dataclass(frozen=True)
class Month:
    """A calendar month (year + month), ordered chronologically."""

    year: int
    month: int

    def __post_init__(self) -> None:
        if not (1 <= self.month <= 12):
            raise ValueError(f"month out of range: {self.month}")

    def iso(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    def display(self) -> str:
        return f"{self.month:02d}/{self.year % 100:02d}"

    def first_day(self) -> date:
        return date(self.year, self.month, 1)

    def last_day(self) -> date:
        return date(self.year, self.month, calendar.monthrange(self.year, self.month)[1])

    @classmethod
    def of(cls, d: date) -> "Month":
        return cls(d.year, d.month)

    @classmethod
    def from_iso(cls, text: str) -> "Month":
        y, m = text.split("-")
        return cls(int(y), int(m))

    def __lt__(self, other: "Month") -> bool:
        return (self.year, self.month) < (other.year, other.month)

    def __str__(self) -> str:
        return self.iso()


Scalar = Union[date, Month, int, Decimal, str]

_MDY = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{2}|\d{4})$")
_INT = re.compile(r"^[+-]?\d+$")
_DEC = re.compile(r"^[+-]?\d+\.\d+$")
_ISO_MONTH = re.compile(r"^(\d{4})-(\d{2})$")
_MY = re.compile(r"^(\d{1,2})/(\d{2})$")


def parse_date(text: str) -> Optional[date]:
    """Accepts ISO (2023-11-24) and M/D/YY(YY); two-digit years map to 2000-2099."""
    text = text.strip()
    m = _MDY.match(text)
    if m:
        mo, d, y = int(m.group(1)), int(m.group(2)), int(m.group(3))
        if y < 100:
            y += 2000
        try:
            return date(y, mo, d)
        except ValueError:
            return None
    try:
        return date.fromisoformat(text)
    except ValueError:
        return None


def parse_month(text: str) -> Optional[Month]:
    """Accepts YYYY-MM and the MM/YY display form."""
    text = text.strip()
    m = _ISO_MONTH.match(text)
    if m:
        try:
            return Month(int(m.group(1)), int(m.group(2)))
        except ValueError:
            return None
    m = _MY.match(text)
    if m:
        try:
            return Month(2000 + int(m.group(2)), int(m.group(1)))
        except ValueError:
            return None
    return None


def parse_scalar(text: str) -> Scalar:
    """Best-effort typed parse of a raw cell: date, then integer, then decimal, else text."""
    stripped = text.strip()
    d = parse_date(stripped)
    if d is not None:
        return d
    if _INT.match(stripped):
        return int(stripped)
    if _DEC.match(stripped):
        return Decimal(stripped)
    return stripped


def coerce(value: Scalar, value_type: str) -> Scalar:
    """Coerce a parsed scalar to a column's declared type; raises ValueError if impossible."""
    if value_type == "date":
        if isinstance(value, date):
            return value
        if isinstance(value, str):
            d = parse_date(value)
            if d is not None:
                return d
        raise ValueError(f"not a date: {value!r}")
    if value_type == "month":
        if isinstance(value, Month):
            return value
        if isinstance(value, date):
            return Month.of(value)
        if isinstance(value, str):
            m = parse_month(value)
            if m is not None:
                return m
        raise ValueError(f"not a month: {value!r}")
    if value_type == "integer":
        if isinstance(value, bool):
            raise ValueError("boolean is not an integer cell")
        if isinstance(value, int):
            return value
        if isinstance(value, Decimal) and value == value.to_integral_value():
            return int(value)
        if isinstance(value, str) and _INT.match(value.strip()):
            return int(value.strip())
        raise ValueError(f"not an integer: {value!r}")
    if value_type == "decimal":
        if isinstance(value, Decimal):
            return value
        if isinstance(value, int):
            return Decimal(value)
        if isinstance(value, str):
            try:
                return Decimal(value.strip())
            except InvalidOperation:
                pass
        raise ValueError(f"not a decimal: {value!r}")
    if value_type == "text":
        if isinstance(value, str):
            return value
        return canonical_text(value)
    raise ValueError(f"unknown value type: {value_type}")


def canonical_text(value: Scalar) -> str:
    if isinstance(value, Month):
        return value.iso()
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, Decimal):
        return _canonical_decimal(value)
    return str(value)


def _canonical_decimal(d: Decimal) -> str:
    if not d.is_finite():
        raise ValueError("non-finite decimal")
    return format(d.normalize(), "f")


_TAG_OF_TYPE = {"date": b"D", "month": b"M", "integer": b"I", "decimal": b"F", "text": b"T"}


def encode_scalar(value: Scalar) -> bytes:
    """Canonical tagged byte encoding; equal scalars encode identically."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a cell value")
    if isinstance(value, Month):
        return b"M" + value.iso().encode()
    if isinstance(value, date):
        return b"D" + value.isoformat().encode()
    if isinstance(value, int):
        return b"I" + str(value).encode()
    if isinstance(value, Decimal):
        return b"F" + _canonical_decimal(value).encode()
    if isinstance(value, str):
        return b"T" + value.encode()
    if isinstance(value, bytes):
        return b"B" + value
    raise ValueError(f"unsupported scalar: {type(value)}")


def decode_scalar(data: bytes) -> Union[Scalar, bytes]:
    if not data:
        raise ValueError("empty scalar encoding")
    tag, body = data[:1], data[1:]
    if tag == b"M":
        return Month.from_iso(body.decode())
    if tag == b"D":
        return date.fromisoformat(body.decode())
    if tag == b"I":
        return int(body.decode())
    if tag == b"F":
        return Decimal(body.decode())
    if tag == b"T":
        return body.decode()
    if tag == b"B":
        return body
    raise ValueError(f"unknown scalar tag: {tag!r}")


def scalar_to_json(value: Optional[Scalar]):
    """JSON-friendly tagged form used by vault-state persistence and reports."""
    if value is None:
        return None
    if isinstance(value, Month):
        return {"t": "month", "v": value.iso()}
    if isinstance(value, date):
        return {"t": "date", "v": value.isoformat()}
    if isinstance(value, int):
        return {"t": "integer", "v": str(value)}
    if isinstance(value, Decimal):
        return {"t": "decimal", "v": _canonical_decimal(value)}
    if isinstance(value, str):
        return {"t": "text", "v": value}
    raise ValueError(f"unsupported scalar: {type(value)}")


def scalar_from_json(obj) -> Optional[Scalar]:
    if obj is None:
        return None
    t, v = obj["t"], obj["v"]
    if t == "month":
        return Month.from_iso(v)
    if t == "date":
        return date.fromisoformat(v)
    if t == "integer":
        return int(v)
    if t == "decimal":
        return Decimal(v)
    if t == "text":
        return v
    raise ValueError(f"unknown scalar type: {t}")


def display_scalar(value: Optional[Scalar]) -> str:
    """Human-facing rendering; months render as MM/YY."""
    if value is None:
        return ""
    if isinstance(value, Month):
        return value.display()
    return canonical_text(value)


def combine_date_time(d: date, time_text: Optional[str]) -> datetime:
    """Observed moment for a row; rows without a time-of-day count as midnight."""
    if time_text:
        for fmt in ("%H:%M:%S", "%H:%M"):
            try:
                t = datetime.strptime(time_text.strip(), fmt).time()
                return datetime.combine(d, t)
            except ValueError:
                continue
    return datetime.combine(d, datetime.min.time())
