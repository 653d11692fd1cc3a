"""A small SELECT/WHERE/FILTER query dialect over a :class:`TripleStore`.

Supported shape::

    PREFIX fda: <...>            (optional, repeatable)
    SELECT ?a ?b WHERE {
        ?a base:hasSensingTime ?b .
        FILTER ( regex(str(?a), 'pattern', 'i') )
    }

Only regex filters are supported.  Regex patterns are restricted to
literal characters, character classes, ``.``, ``*``, ``+``, ``?``, the
anchors ``^``/``$`` and top-level ``|``.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .errors import QuerySyntaxError, UnknownPrefix, UnsupportedFilter
from .store import TripleStore
from .terms import IRI, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, GroundTerm, Literal, PrefixTable, Term, Triple, Variable, q

TriplePattern = Tuple[Term, Term, Term]
BindingRow = Dict[str, GroundTerm]


@dataclass(frozen=True)
class RegexFilter:
    var: str
    pattern: str
    flags: str = ""

    def compiled(self) -> "re.Pattern[str]":
        return compile_regex(self.pattern, self.flags)


@dataclass
class Query:
    select: List[str]
    patterns: List[TriplePattern]
    filters: List[RegexFilter] = field(default_factory=list)

    def __post_init__(self) -> None:
        bound = {t.name for p in self.patterns for t in p if isinstance(t, Variable)}
        for name in self.select:
            if name not in bound:
                raise QuerySyntaxError(f"selected variable ?{name} does not appear in any pattern")
        for f in self.filters:
            if f.var not in bound:
                raise QuerySyntaxError(f"filter variable ?{f.var} does not appear in any pattern")


# -- regex subset -------------------------------------------------------------

_REGEX_META_OK = set(".*+?^$|[]")


def check_regex_subset(pattern: str) -> None:
    """Reject anything outside the supported regex subset."""
    i = 0
    prev_quantifiable = False
    while i < len(pattern):
        c = pattern[i]
        if c == "\\":
            if i + 1 >= len(pattern):
                raise UnsupportedFilter("dangling backslash in regex")
            nxt = pattern[i + 1]
            if nxt.isalnum():
                raise UnsupportedFilter(f"escape \\{nxt} is outside the supported regex subset")
            i += 2
            prev_quantifiable = True
            continue
        if c in "(){}":
            raise UnsupportedFilter(f"{c!r} is outside the supported regex subset")
        if c == "[":
            end = i + 1
            if end < len(pattern) and pattern[end] == "^":
                end += 1
            if end < len(pattern) and pattern[end] == "]":
                end += 1
            while end < len(pattern) and pattern[end] != "]":
                if pattern[end] == "\\":
                    if end + 1 < len(pattern) and pattern[end + 1].isalnum():
                        raise UnsupportedFilter("escapes inside classes are limited to punctuation")
                    end += 1
                if pattern[end : end + 2] in ("[:", "[=", "[."):
                    raise UnsupportedFilter("POSIX classes are not supported")
                end += 1
            if end >= len(pattern):
                raise UnsupportedFilter("unterminated character class")
            i = end + 1
            prev_quantifiable = True
            continue
        if c in "*+?":
            if not prev_quantifiable:
                raise UnsupportedFilter(f"quantifier {c!r} has nothing to repeat")
            prev_quantifiable = False
            i += 1
            continue
        prev_quantifiable = c not in "^$|"
        i += 1


def compile_regex(pattern: str, flags: str = "") -> "re.Pattern[str]":
    check_regex_subset(pattern)
    bad = set(flags) - {"i"}
    if bad:
        raise UnsupportedFilter(f"unsupported regex flags {''.join(sorted(bad))!r}")
    try:
        return re.compile(pattern, re.IGNORECASE if "i" in flags else 0)
    except re.error as exc:
        raise UnsupportedFilter(f"bad regex: {exc}") from None


def term_string(term: GroundTerm) -> str:
    """``str()`` as the filter sees it: IRI text or literal lexical form."""
    return term.value if isinstance(term, IRI) else term.lexical


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<iri><[^<>\s"]*>)
  | (?P<var>[?$][A-Za-z_]\w*)
  | (?P<str1>'(?:[^'\\]|\\.)*')
  | (?P<str2>"(?:[^"\\]|\\.)*")
  | (?P<num>[+-]?(?:\d+\.\d+|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<punct>[{}().,;])
  | (?P<name>[A-Za-z_][\w-]*(?::[\w-]*)?:?)
    """,
    re.VERBOSE,
)


def _unquote(token: str) -> str:
    body = token[1:-1]
    # a raw line break inside a short string is a print-layout wrap; drop it
    # together with the indentation that follows
    body = re.sub(r"\r?\n[ \t]*", "", body)
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t", "r": "\r"}.get(m.group(1), m.group(1)), body)


class _QueryParser:
    def __init__(self, text: str, prefixes: PrefixTable):
        self.text = text
        self.prefixes = prefixes
        self.tokens = []
        i = 0
        while i < len(text):
            m = _TOKEN.match(text, i)
            if not m:
                raise QuerySyntaxError(f"unexpected character {text[i]!r}", i)
            if m.lastgroup not in ("ws", "comment"):
                self.tokens.append((m.lastgroup, m.group(), i))
            i = m.end()
        self.pos = 0

    def peek(self, k: int = 0):
        j = self.pos + k
        return self.tokens[j] if j < len(self.tokens) else ("eof", "", len(self.text))

    def take(self, kind: Optional[str] = None, value: Optional[str] = None, keyword: bool = False):
        tok = self.peek()
        ok = True
        if kind and tok[0] != kind:
            ok = False
        if value is not None:
            ok = ok and (tok[1].upper() == value.upper() if keyword else tok[1] == value)
        if not ok:
            raise QuerySyntaxError(f"expected {value or kind!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.pos += 1
        return tok

    def is_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok[0] == "name" and tok[1].upper() == word

    def parse(self) -> Query:
        while self.is_keyword("PREFIX"):
            self.pos += 1
            _, name, off = self.take("name")
            if not name.endswith(":"):
                raise QuerySyntaxError("prefix name must end with ':'", off)
            _, iri, _ = self.take("iri")
            self.prefixes.bind(name[:-1], iri[1:-1])
        self.take("name", "SELECT", keyword=True)
        select = []
        while self.peek()[0] == "var":
            select.append(self.take()[1][1:])
        if not select:
            raise QuerySyntaxError("SELECT needs at least one variable", self.peek()[2])
        if self.is_keyword("WHERE"):
            self.pos += 1
        self.take("punct", "{")
        patterns: List[TriplePattern] = []
        filters: List[RegexFilter] = []
        while self.peek()[1] != "}":
            kind, value, off = self.peek()
            if kind == "eof":
                raise QuerySyntaxError("unterminated WHERE block", off)
            if kind == "name" and value.upper() == "FILTER":
                filters.append(self.filter())
            elif value == ".":
                self.pos += 1
            else:
                patterns.append((self.term(), self.term(), self.term()))
                if self.peek()[1] == ".":
                    self.pos += 1
                elif self.peek()[1] != "}" and not self.is_keyword("FILTER"):
                    raise QuerySyntaxError("expected '.' after triple pattern", self.peek()[2])
        self.take("punct", "}")
        if self.peek()[0] != "eof":
            raise QuerySyntaxError(f"trailing input {self.peek()[1]!r}", self.peek()[2])
        return Query(select, patterns, filters)

    def filter(self) -> RegexFilter:
        _, _, off = self.take("name")
        self.take("punct", "(")
        if not (self.peek()[0] == "name" and self.peek()[1].lower() == "regex"):
            raise UnsupportedFilter(f"only regex(str(?v), 'pattern', 'flags') filters are supported (offset {off})", off)
        self.pos += 1
        self.take("punct", "(")
        if not (self.peek()[0] == "name" and self.peek()[1].lower() == "str"):
            raise UnsupportedFilter("regex must be applied to str(?var)", off)
        self.pos += 1
        self.take("punct", "(")
        var = self.take("var")[1][1:]
        self.take("punct", ")")
        self.take("punct", ",")
        pattern = self.string()
        flags = ""
        if self.peek()[1] == ",":
            self.pos += 1
            flags = self.string()
        self.take("punct", ")")
        # the published fire query never closes its FILTER parenthesis;
        # accept that when the block ends right after the regex call
        if self.peek()[1] != "}":
            self.take("punct", ")")
        compile_regex(pattern, flags)
        return RegexFilter(var, pattern, flags)

    def string(self) -> str:
        kind, value, off = self.take()
        if kind not in ("str1", "str2"):
            raise QuerySyntaxError(f"expected string, found {value!r}", off)
        return _unquote(value)

    def term(self) -> Term:
        kind, value, off = self.take()
        if kind == "var":
            return Variable(value[1:])
        if kind == "iri":
            return IRI(value[1:-1])
        if kind in ("str1", "str2"):
            return Literal(_unquote(value))
        if kind == "num":
            if re.fullmatch(r"[+-]?\d+", value):
                return Literal(value, XSD_INTEGER)
            return Literal(value, XSD_DOUBLE if "e" in value.lower() else XSD_DECIMAL)
        if kind == "name":
            if value == "a":
                return q("rdf:type")
            if ":" in value:
                try:
                    return IRI(self.prefixes.expand(value))
                except UnknownPrefix:
                    raise UnknownPrefix(f"{value} at offset {off}") from None
        raise QuerySyntaxError(f"expected term, found {value!r}", off)


def parse_query(text: str, prefixes: Optional[PrefixTable] = None) -> Query:
    table = prefixes.copy() if prefixes is not None else PrefixTable.default()
    return _QueryParser(text, table).parse()


# -- execution ----------------------------------------------------------------


def _bind(pattern: TriplePattern, t: Triple, row: BindingRow) -> Optional[BindingRow]:
    out = dict(row)
    for pt, value in zip(pattern, t):
        if isinstance(pt, Variable):
            seen = out.get(pt.name)
            if seen is None:
                out[pt.name] = value
            elif seen != value:
                return None
        elif pt != value:
            return None
    return out


def _solutions(patterns: Sequence[TriplePattern], store: TripleStore) -> Iterator[BindingRow]:
    rows: List[BindingRow] = [{}]
    for pattern in patterns:
        nxt = []
        for row in rows:
            probe = tuple(row.get(x.name, x) if isinstance(x, Variable) else x for x in pattern)
            for t in store.match(probe):
                bound = _bind(pattern, t, row)
                if bound is not None:
                    nxt.append(bound)
        rows = nxt
        if not rows:
            break
    return iter(rows)


def row_key(row: BindingRow, select: Sequence[str]) -> tuple:
    return tuple(term_string(row[name]) for name in select)


def execute(query: Query, store: TripleStore) -> List[BindingRow]:
    compiled = [(f.var, f.compiled()) for f in query.filters]
    out = []
    for row in _solutions(query.patterns, store):
        if all(rx.search(term_string(row[var])) for var, rx in compiled):
            out.append({name: row[name] for name in query.select})
    out.sort(key=lambda r: (row_key(r, query.select), tuple(type(r[n]).__name__ for n in query.select)))
    return out


def rows_to_csv(query: Query, rows: Sequence[BindingRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(query.select)
    for row in rows:
        writer.writerow([term_string(row[name]) for name in query.select])
    return buf.getvalue()
