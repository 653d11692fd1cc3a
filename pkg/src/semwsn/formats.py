"""Wire formats: SenML packs, pipe-delimited simple strings and N-Triples.

SenML subset accepted here::

    {"bn": "urn:spot-1/", "bt": 1400000000, "lon": -73.6, "lat": 45.5,
     "e": [{"n": "temp", "u": "Cel", "v": 85.0, "t": 0}]}

Simple-string records (one per LF-terminated line)::

    source|Quantity|value|unit|epoch_ms|lon|lat
"""

from __future__ import annotations

import json
import math
import re
from typing import Iterable, List, Optional, Sequence

from .errors import (
    BlankNodeUnsupported,
    InvalidModel,
    MalformedPack,
    MalformedRecord,
    MissingValue,
    NTriplesSyntaxError,
    UnknownQuantity,
    UnknownUnit,
)
from .model import Quantity, RawReading, quantity_for_unit
from .terms import IRI, XSD_STRING, Literal, PrefixTable, Triple

# -- SenML --------------------------------------------------------------------


def _number(obj: dict, key: str, default: Optional[float] = None) -> float:
    if key not in obj:
        if default is None:
            raise MalformedPack(f"missing {key!r}")
        return default
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise MalformedPack(f"{key!r} must be a finite number")
    return float(value)


def parse_senml(text: bytes | str) -> List[RawReading]:
    """Decode one SenML pack into readings, one per entry, in entry order."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPack(f"not UTF-8: {exc}") from None
    try:
        pack = json.loads(text)
    except (ValueError, RecursionError) as exc:
        raise MalformedPack(f"invalid JSON: {exc}") from None
    if not isinstance(pack, dict):
        raise MalformedPack("pack must be a JSON object")
    bn = pack.get("bn")
    if not isinstance(bn, str) or not bn.rstrip("/"):
        raise MalformedPack("'bn' must be a non-empty string")
    bt = _number(pack, "bt", 0.0)
    lon = _number(pack, "lon")
    lat = _number(pack, "lat")
    entries = pack.get("e")
    if not isinstance(entries, list) or not entries:
        raise MalformedPack("'e' must be a non-empty array")

    source = bn.rstrip("/")
    readings = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise MalformedPack(f"entry {i} is not an object")
        name = entry.get("n", "")
        unit = entry.get("u")
        if not isinstance(name, str) or not isinstance(unit, str):
            raise MalformedPack(f"entry {i}: 'n' and 'u' must be strings")
        quantity = quantity_for_unit(unit)
        if "v" not in entry:
            raise MissingValue(f"entry {i} ({bn}{name}) has no 'v'")
        value = _number(entry, "v")
        t = _number(entry, "t", 0.0)
        when = (bt + t) * 1000.0
        if not math.isfinite(when) or abs(when) > 2**62:
            raise MalformedPack(f"entry {i}: time out of range")
        try:
            readings.append(
                RawReading(source, quantity, value, unit, int(round(when)), lon, lat)
            )
        except InvalidModel as exc:
            raise MalformedPack(f"entry {i}: {exc}") from None
    return readings


def serialize_senml(readings: Sequence[RawReading]) -> bytes:
    """Encode readings that share one source and position as a single pack.

    Base time is the first reading's timestamp; every entry carries its
    offset so parsing reproduces the millisecond timestamps exactly.
    """
    if not readings:
        raise MalformedPack("cannot encode an empty pack")
    first = readings[0]
    for r in readings[1:]:
        if (r.source, r.longitude, r.latitude) != (first.source, first.longitude, first.latitude):
            raise MalformedPack("a pack carries a single source and position")
    base_ms = first.timestamp_ms
    pack = {
        "bn": first.source + "/",
        "bt": base_ms / 1000,
        "lon": first.longitude,
        "lat": first.latitude,
        "e": [
            {"n": r.quantity.slug, "u": r.unit, "v": r.value, "t": (r.timestamp_ms - base_ms) / 1000}
            for r in readings
        ],
    }
    return json.dumps(pack, separators=(",", ":")).encode("utf-8")


# -- simple string ------------------------------------------------------------


def parse_simple_string(text: bytes | str) -> RawReading:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("ascii")
        except UnicodeDecodeError:
            raise MalformedRecord("record is not ASCII") from None
    line = text[:-1] if text.endswith("\n") else text
    fields = line.split("|")
    if len(fields) != 7:
        raise MalformedRecord(f"expected 7 fields, got {len(fields)}")
    source, quantity_name, value, unit, stamp, lon, lat = fields
    quantity = Quantity.parse(quantity_name)
    try:
        reading = RawReading(
            source=source,
            quantity=quantity,
            value=float(value),
            unit=unit,
            timestamp_ms=int(stamp),
            longitude=float(lon),
            latitude=float(lat),
        )
    except ValueError as exc:
        # InvalidModel is a ValueError too, so unit/range problems land here
        raise MalformedRecord(str(exc)) from None
    return reading


def serialize_simple_string(reading: RawReading) -> bytes:
    if "|" in reading.source or "\n" in reading.source or not reading.source.isascii():
        raise MalformedRecord(f"source {reading.source!r} cannot be framed")
    fields = (
        reading.source,
        reading.quantity.value,
        repr(reading.value),
        reading.unit,
        str(reading.timestamp_ms),
        repr(reading.longitude),
        repr(reading.latitude),
    )
    return ("|".join(fields) + "\n").encode("ascii")


# -- N-Triples ----------------------------------------------------------------

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t", "b": "\b", "f": "\f", "'": "'"}


def _escape(text: str) -> str:
    return "".join(_ESCAPES.get(c, c) for c in text)


def _term_nt(term) -> str:
    if isinstance(term, IRI):
        return term.n3()
    if isinstance(term, Literal):
        body = f'"{_escape(term.lexical)}"'
        if term.datatype != XSD_STRING:
            body += f"^^<{term.datatype}>"
        return body
    raise InvalidModel(f"cannot serialize {term!r}")


def serialize_ntriples(triples: Iterable[Triple], prefixes: Optional[PrefixTable] = None) -> bytes:
    # N-Triples has no prefix syntax; ``prefixes`` is accepted for API symmetry
    lines = [f"{_term_nt(t.subject)} {_term_nt(t.predicate)} {_term_nt(t.object)} .\n" for t in triples]
    return "".join(lines).encode("utf-8")


_IRI_RE = re.compile(r"<([^<>\"{}|^`\\\x00-\x20]*)>")
_WS_RE = re.compile(r"[ \t]*")


class _LineParser:
    def __init__(self, line: str, lineno: int):
        self.s = line
        self.i = 0
        self.lineno = lineno

    def fail(self, msg: str):
        raise NTriplesSyntaxError(msg, self.lineno)

    def ws(self) -> None:
        self.i = _WS_RE.match(self.s, self.i).end()

    def iri(self) -> IRI:
        m = _IRI_RE.match(self.s, self.i)
        if not m:
            self.fail(f"expected IRI at column {self.i + 1}")
        self.i = m.end()
        try:
            return IRI(m.group(1))
        except InvalidModel as exc:
            self.fail(str(exc))

    def subject(self) -> IRI:
        if self.s.startswith("_:", self.i):
            raise BlankNodeUnsupported("blank nodes are not supported", self.lineno)
        return self.iri()

    def obj(self):
        c = self.s[self.i : self.i + 1]
        if c == "<":
            return self.iri()
        if c == "_":
            raise BlankNodeUnsupported("blank nodes are not supported", self.lineno)
        if c == '"':
            return self.literal()
        self.fail(f"expected object at column {self.i + 1}")

    def literal(self) -> Literal:
        self.i += 1
        out = []
        s = self.s
        while True:
            if self.i >= len(s):
                self.fail("unterminated literal")
            c = s[self.i]
            if c == '"':
                self.i += 1
                break
            if c == "\\":
                nxt = s[self.i + 1 : self.i + 2]
                if nxt in _UNESCAPES:
                    out.append(_UNESCAPES[nxt])
                    self.i += 2
                elif nxt in ("u", "U"):
                    width = 4 if nxt == "u" else 8
                    digits = s[self.i + 2 : self.i + 2 + width]
                    if len(digits) != width or not all(d in "0123456789abcdefABCDEF" for d in digits):
                        self.fail("bad unicode escape")
                    code = int(digits, 16)
                    if code > 0x10FFFF or 0xD800 <= code <= 0xDFFF:
                        self.fail("bad unicode escape")
                    out.append(chr(code))
                    self.i += 2 + width
                else:
                    self.fail("bad escape")
            else:
                out.append(c)
                self.i += 1
        datatype = XSD_STRING
        if s.startswith("^^", self.i):
            self.i += 2
            datatype = self.iri().value
        elif s.startswith("@", self.i):
            self.fail("language tags are not supported")
        return Literal("".join(out), datatype)

    def statement(self) -> Triple:
        self.ws()
        s = self.subject()
        self.ws()
        p = self.iri()
        self.ws()
        o = self.obj()
        self.ws()
        if not self.s.startswith(".", self.i):
            self.fail("expected '.'")
        self.i += 1
        self.ws()
        if self.i < len(self.s) and not self.s.startswith("#", self.i):
            self.fail("trailing content after '.'")
        return Triple(s, p, o)


def parse_ntriples(text: bytes | str) -> List[Triple]:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise NTriplesSyntaxError(f"not UTF-8: {exc}", 1) from None
    triples = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        stripped = line.strip(" \t")
        if not stripped or stripped.startswith("#"):
            continue
        triples.append(_LineParser(line, lineno).statement())
    return triples


def parse_raw(body: bytes, wire_format) -> List[RawReading]:
    """Decode a raw payload given its wire format name or enum."""
    name = getattr(wire_format, "value", wire_format)
    if name == "SenML":
        return parse_senml(body)
    if name == "SimpleString":
        return [parse_simple_string(line) for line in bytes(body).split(b"\n") if line]
    raise MalformedRecord(f"unknown wire format {wire_format!r}")


def serialize_raw(reading: RawReading, wire_format) -> bytes:
    name = getattr(wire_format, "value", wire_format)
    if name == "SenML":
        return serialize_senml([reading])
    if name == "SimpleString":
        return serialize_simple_string(reading)
    raise MalformedRecord(f"unknown wire format {wire_format!r}")


__all__ = [
    "parse_senml",
    "serialize_senml",
    "parse_simple_string",
    "serialize_simple_string",
    "parse_ntriples",
    "serialize_ntriples",
    "parse_raw",
    "serialize_raw",
    "UnknownQuantity",
    "UnknownUnit",
]
