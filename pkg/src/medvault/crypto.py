"""Per-column encryption for the outsourced tables.

Three schemes, one key per (table, column):

* deterministic: AES-SIV. Equal plaintexts under one key give identical
  ciphertexts, so the store can run point scans by byte equality. The SIV
  tag authenticates, so tampering is detected on decrypt.
* order_preserving: a keyed, stateful encoding. The engine keeps a sorted
  per-column codebook mapping plaintext to a byte-string code; codes are
  assigned by lexicographic midpoint with unbounded precision, so byte
  order over codes equals plaintext order and the book never needs
  rewriting codes already sent to the store.
* opaque: AES-GCM with a random nonce. Hides everything, including
  equality; used for payloads and columns never touched by predicates.

Keys and codebooks live in vault state and never leave the trusted engine.
"""

from __future__ import annotations

import bisect
import hashlib
import hmac
import os
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from typing import Dict, List, Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, AESSIV

from .errors import DecryptAuthFailure, DomainOverflow, WrongScheme
from .records import (
    SCHEME_DETERMINISTIC,
    SCHEME_OPAQUE,
    SCHEME_ORDER_PRESERVING,
    Ciphertext,
)
from .values import Month, Scalar, decode_scalar, encode_scalar, scalar_from_json, scalar_to_json

KEY_BYTES = 32
_GCM_NONCE_BYTES = 12

_MAX_TEXT_LEN = 4096
_INT_BOUND = 1 << 63


@dataclass(frozen=True)
class ColumnKey:
    table: str
    column: str
    scheme: str  # "deterministic" | "order_preserving" | "opaque"
    key_material: bytes

    @classmethod
    def generate(cls, table: str, column: str, scheme: str) -> "ColumnKey":
        return cls(table, column, scheme, os.urandom(KEY_BYTES))


def _require_scheme(key: ColumnKey, scheme: str) -> None:
    if key.scheme != scheme:
        raise WrongScheme(f"{key.table}.{key.column} is {key.scheme}, not {scheme}")


def _context(key: ColumnKey) -> list[bytes]:
    return [key.table.encode(), key.column.encode()]


# --- deterministic -----------------------------------------------------------

def det_encrypt(key: ColumnKey, value: Scalar, refs: tuple[str, str]) -> Ciphertext:
    _require_scheme(key, "deterministic")
    ct = AESSIV(key.key_material).encrypt(encode_scalar(value), _context(key))
    return Ciphertext(SCHEME_DETERMINISTIC, refs[0], refs[1], ct)


def det_decrypt(key: ColumnKey, ct: Ciphertext) -> Scalar:
    _require_scheme(key, "deterministic")
    if ct.scheme_id != SCHEME_DETERMINISTIC:
        raise WrongScheme("ciphertext is not deterministic")
    try:
        plain = AESSIV(key.key_material).decrypt(ct.payload, _context(key))
    except InvalidTag as exc:
        raise DecryptAuthFailure(f"{key.table}.{key.column}: tampered cell") from exc
    return decode_scalar(plain)


# --- opaque ------------------------------------------------------------------

def opaque_encrypt(key: ColumnKey, data: bytes, refs: tuple[str, str]) -> Ciphertext:
    _require_scheme(key, "opaque")
    nonce = os.urandom(_GCM_NONCE_BYTES)
    ct = AESGCM(key.key_material).encrypt(nonce, data, b"".join(_context(key)))
    return Ciphertext(SCHEME_OPAQUE, refs[0], refs[1], nonce + ct)


def opaque_decrypt(key: ColumnKey, ct: Ciphertext) -> bytes:
    _require_scheme(key, "opaque")
    if ct.scheme_id != SCHEME_OPAQUE:
        raise WrongScheme("ciphertext is not opaque")
    nonce, body = ct.payload[:_GCM_NONCE_BYTES], ct.payload[_GCM_NONCE_BYTES:]
    try:
        return AESGCM(key.key_material).decrypt(nonce, body, b"".join(_context(key)))
    except InvalidTag as exc:
        raise DecryptAuthFailure(f"{key.table}.{key.column}: tampered cell") from exc


def opaque_encrypt_value(key: ColumnKey, value: Scalar, refs: tuple[str, str]) -> Ciphertext:
    return opaque_encrypt(key, encode_scalar(value), refs)


def opaque_decrypt_value(key: ColumnKey, ct: Ciphertext) -> Scalar:
    return decode_scalar(opaque_decrypt(key, ct))


# --- order-preserving codebook -----------------------------------------------

def _above(a: bytes) -> bytes:
    """Some byte string strictly greater than a, with no trailing zero byte."""
    for i, d in enumerate(a):
        if d < 0xFF:
            return a[:i] + bytes([d + 1])
    return a + b"\x80"


def _midpoint(a: bytes, b: bytes) -> bytes:
    """Byte string m with a < m < b lexicographically; never ends in a zero byte.

    b must not end in a zero byte (codebook invariant), which guarantees the
    recursion in the prefix case terminates.
    """
    assert a < b, (a, b)
    i = 0
    while i < len(a) and i < len(b) and a[i] == b[i]:
        i += 1
    prefix, ra, rb = a[:i], a[i:], b[i:]
    if ra:
        da, db = ra[0], rb[0]
        if db - da >= 2:
            return prefix + bytes([(da + db) // 2])
        # adjacent digits: stay in the lower branch and outgrow a's remainder
        return prefix + bytes([da]) + _above(ra[1:])
    db = rb[0]
    if db >= 2:
        return prefix + bytes([db // 2])
    if db == 1:
        return prefix + b"\x00\x80"
    return prefix + b"\x00" + _midpoint(b"", rb[1:])


def _check_domain(value: Scalar) -> None:
    if isinstance(value, bool):
        raise DomainOverflow("boolean outside ordered domain")
    if isinstance(value, int):
        if not (-_INT_BOUND <= value < _INT_BOUND):
            raise DomainOverflow(f"integer out of range: {value}")
        return
    if isinstance(value, Decimal):
        if not value.is_finite():
            raise DomainOverflow("non-finite decimal")
        if abs(value) >= Decimal(_INT_BOUND):
            raise DomainOverflow(f"decimal out of range: {value}")
        return
    if isinstance(value, (date, Month)):
        return
    if isinstance(value, str):
        if len(value) > _MAX_TEXT_LEN:
            raise DomainOverflow("text too long for ordered column")
        return
    raise DomainOverflow(f"unsupported ordered type: {type(value)}")


class OpeCodebook:
    """Sorted plaintext-to-code map for one order-preserving column.

    Codes are byte strings compared lexicographically; assignment keeps
    plaintext order and code order identical. Encoding a new value mutates
    the book, so callers persist it with the rest of vault state.
    """

    def __init__(self) -> None:
        self._keys: List[Scalar] = []
        self._codes: List[bytes] = []

    def __len__(self) -> int:
        return len(self._keys)

    def encode(self, value: Scalar) -> bytes:
        _check_domain(value)
        i = bisect.bisect_left(self._keys, value)
        if i < len(self._keys) and self._keys[i] == value:
            return self._codes[i]
        lo = self._codes[i - 1] if i > 0 else b""
        if i < len(self._codes):
            code = _midpoint(lo, self._codes[i])
        else:
            code = _above(lo)
        self._keys.insert(i, value)
        self._codes.insert(i, code)
        return code

    def code_for(self, value: Scalar) -> Optional[bytes]:
        i = bisect.bisect_left(self._keys, value)
        if i < len(self._keys) and self._keys[i] == value:
            return self._codes[i]
        return None

    def decode(self, code: bytes) -> Scalar:
        i = bisect.bisect_left(self._codes, code)
        if i < len(self._codes) and self._codes[i] == code:
            return self._keys[i]
        raise DecryptAuthFailure("unknown order-preserving code")

    def max_code_len(self) -> int:
        return max((len(c) for c in self._codes), default=1)

    def to_json(self) -> list:
        return [[scalar_to_json(k), c.hex()] for k, c in zip(self._keys, self._codes)]

    @classmethod
    def from_json(cls, items: list) -> "OpeCodebook":
        book = cls()
        for k, c in items:
            book._keys.append(scalar_from_json(k))
            book._codes.append(bytes.fromhex(c))
        return book


def ope_encrypt(key: ColumnKey, book: OpeCodebook, value: Scalar, refs: tuple[str, str]) -> Ciphertext:
    _require_scheme(key, "order_preserving")
    return Ciphertext(SCHEME_ORDER_PRESERVING, refs[0], refs[1], book.encode(value))


def ope_decrypt(key: ColumnKey, book: OpeCodebook, ct: Ciphertext) -> Scalar:
    _require_scheme(key, "order_preserving")
    if ct.scheme_id != SCHEME_ORDER_PRESERVING:
        raise WrongScheme("ciphertext is not order-preserving")
    return book.decode(ct.payload)


def ope_range_top(book: OpeCodebook) -> bytes:
    """Upper bound above every code the book has ever issued."""
    return b"\xff" * (book.max_code_len() + 1)


# --- name pseudonyms ---------------------------------------------------------

class NameMap:
    """Keyed pseudonyms for table and column names sent to the store."""

    def __init__(self, secret: bytes) -> None:
        self._secret = secret

    def table_id(self, table: str) -> str:
        return self._token(table.encode())

    def column_id(self, table: str, column: str) -> str:
        return self._token(table.encode() + b"\x00" + column.encode())

    def _token(self, data: bytes) -> str:
        return hmac.new(self._secret, data, hashlib.sha256).digest()[:12].hex()
