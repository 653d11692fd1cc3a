"""Forward-chaining rules in the bracketed ``[Name: body -> head]`` syntax.

Example::

    @prefix fda: <http://www.semanticweb.org/WirelessSensor/FireApplication#> .
    [Rule1: (?output ssn:hasValue ?Value) greaterThan(?Value,80),
            (?output rdf:type base:TemperatureOutput)
            -> (?output fda:hasTemperatureType fda:HighTemperature)]

Evaluation is naive: every round re-evaluates every rule against the whole
store until a round derives nothing new.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import (
    NonNumericComparison,
    RuleSyntaxError,
    UnboundHeadVariable,
    UnknownBuiltin,
    UnknownPrefix,
)
from .store import TripleStore
from .terms import (
    IRI,
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_INTEGER,
    GroundTerm,
    Literal,
    PrefixTable,
    Term,
    Triple,
    Variable,
    parse_decimal,
)

TriplePattern = Tuple[Term, Term, Term]
Binding = Dict[str, GroundTerm]


@dataclass(frozen=True)
class BuiltinCall:
    name: str
    args: Tuple[Term, Term]


BUILTINS = {
    "greaterThan": lambda a, b: a > b,
    "lessThan": lambda a, b: a < b,
    "ge": lambda a, b: a >= b,
    "le": lambda a, b: a <= b,
}

Clause = Union[TriplePattern, BuiltinCall]


def _vars(items: Iterable[Term]) -> set:
    return {t.name for t in items if isinstance(t, Variable)}


@dataclass(frozen=True)
class Rule:
    name: str
    body: Tuple[Clause, ...]
    head: Tuple[TriplePattern, ...]

    @property
    def patterns(self) -> List[TriplePattern]:
        return [c for c in self.body if not isinstance(c, BuiltinCall)]

    @property
    def builtins(self) -> List[BuiltinCall]:
        return [c for c in self.body if isinstance(c, BuiltinCall)]

    def check(self) -> None:
        bound = set()
        for p in self.patterns:
            bound |= _vars(p)
        for h in self.head:
            missing = _vars(h) - bound
            if missing:
                raise UnboundHeadVariable(f"{self.name}: head variable(s) {sorted(missing)} not bound in body")
        for b in self.builtins:
            if b.name not in BUILTINS:
                raise UnknownBuiltin(b.name)
            if len(b.args) != 2:
                raise UnknownBuiltin(f"{b.name} takes exactly 2 arguments")
            missing = _vars(b.args) - bound
            if missing:
                raise UnboundHeadVariable(f"{self.name}: builtin variable(s) {sorted(missing)} not bound in body")


@dataclass
class RuleSet:
    rules: List[Rule] = field(default_factory=list)
    prefixes: PrefixTable = field(default_factory=PrefixTable.default)

    def __post_init__(self) -> None:
        names = [r.name for r in self.rules]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise RuleSyntaxError(f"duplicate rule names {sorted(dupes)}", 0)

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    def __getitem__(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def subset(self, names: Sequence[str]) -> "RuleSet":
        return RuleSet([self[n] for n in names], self.prefixes)

    def __add__(self, other: "RuleSet") -> "RuleSet":
        return RuleSet(self.rules + other.rules, self.prefixes)


# -- parsing ------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>(?:\#|//)[^\n]*)
  | (?P<arrow>->)
  | (?P<punct>[\[\](),])
  | (?P<iri><[^<>\s"]*>)
  | (?P<var>\?[A-Za-z_][\w-]*)
  | (?P<num>[+-]?(?:\d+\.\d+|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<dot>\.)
  | (?P<str>"(?:[^"\\\n]|\\.)*"(?:\^\^(?:<[^<>\s"]*>|[A-Za-z_][\w-]*:[\w-]*))?)
  | (?P<name>[A-Za-z_][\w-]*(?::[\w-]*)?:?)
  | (?P<prefix_decl>@prefix)
    """,
    re.VERBOSE,
)


_STR_ESCAPES = {"n": "\n", "t": "\t", "r": "\r"}


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise RuleSyntaxError(f"unexpected character {text[i]!r}", i)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append((kind, m.group(), i))
        i = m.end()
    return tokens


class _RuleParser:
    def __init__(self, text: str, prefixes: PrefixTable, aliases: Mapping[str, str]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.prefixes = prefixes
        self.aliases = aliases
        self.end = len(text)

    def peek(self, k: int = 0):
        j = self.pos + k
        return self.tokens[j] if j < len(self.tokens) else ("eof", "", self.end)

    def take(self, kind: Optional[str] = None, value: Optional[str] = None):
        tok = self.peek()
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value or kind
            raise RuleSyntaxError(f"expected {want!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.pos += 1
        return tok

    def parse(self) -> List[Rule]:
        rules = []
        while self.peek()[0] != "eof":
            kind, value, off = self.peek()
            if kind == "prefix_decl":
                self.prefix_decl()
            elif value == "[":
                rules.append(self.rule())
            else:
                raise RuleSyntaxError(f"unexpected {value!r}", off)
        return rules

    def prefix_decl(self) -> None:
        self.take("prefix_decl")
        kind, name, off = self.take("name")
        if not name.endswith(":") or name.count(":") != 1:
            raise RuleSyntaxError(f"bad prefix name {name!r}", off)
        _, iri, off = self.take("iri")
        try:
            self.prefixes.bind(name[:-1], iri[1:-1])
        except Exception as exc:
            raise RuleSyntaxError(str(exc), off) from None
        if self.peek()[0] == "dot":
            self.pos += 1

    def rule(self) -> Rule:
        _, _, start = self.take("punct", "[")
        kind, name, off = self.take("name")
        if not name.endswith(":") or name.count(":") != 1:
            raise RuleSyntaxError("rule must start with 'Name:'", off)
        body = self.clauses(stop="arrow")
        self.take("arrow")
        head = self.clauses(stop="]")
        self.take("punct", "]")
        if not head:
            raise RuleSyntaxError("rule has an empty head", start)
        for h in head:
            if isinstance(h, BuiltinCall):
                raise RuleSyntaxError("builtins are not allowed in rule heads", start)
        rule = Rule(name[:-1], tuple(body), tuple(head))
        rule.check()
        return rule

    def clauses(self, stop: str) -> List[Clause]:
        out: List[Clause] = []
        while True:
            kind, value, off = self.peek()
            if kind == stop or value == stop or kind == "eof":
                return out
            if value == ",":
                self.pos += 1
                continue
            if value == "(":
                out.append(self.triple_pattern())
            elif kind == "name" and ":" not in value and self.peek(1)[1] == "(":
                out.append(self.builtin())
            else:
                raise RuleSyntaxError(f"expected clause, found {value!r}", off)

    def triple_pattern(self) -> TriplePattern:
        _, _, start = self.take("punct", "(")
        raw = []
        while self.peek()[1] != ")":
            if self.peek()[0] == "eof":
                raise RuleSyntaxError("unterminated triple pattern", start)
            raw.append(self.take())
        self.take("punct", ")")
        raw = self._join_split_qnames(raw)
        if len(raw) != 3:
            raise RuleSyntaxError(f"triple pattern needs 3 terms, found {len(raw)}", start)
        return tuple(self.term(tok) for tok in raw)  # type: ignore[return-value]

    @staticmethod
    def _join_split_qnames(raw):
        # "fda: fireBlaze" -> "fda:fireBlaze"; only applied when the clause
        # would otherwise have too many terms
        if len(raw) <= 3:
            return raw
        joined = []
        i = 0
        while i < len(raw):
            kind, value, off = raw[i]
            if (
                kind == "name"
                and value.endswith(":")
                and value.count(":") == 1
                and i + 1 < len(raw)
                and raw[i + 1][0] == "name"
                and ":" not in raw[i + 1][1]
            ):
                joined.append(("name", value + raw[i + 1][1], off))
                i += 2
            else:
                joined.append(raw[i])
                i += 1
        return joined

    def builtin(self) -> BuiltinCall:
        _, name, off = self.take("name")
        if name not in BUILTINS:
            raise UnknownBuiltin(f"{name} at offset {off}")
        self.take("punct", "(")
        args = []
        while self.peek()[1] != ")":
            tok = self.take()
            if tok[1] == ",":
                continue
            args.append(self.term(tok))
        self.take("punct", ")")
        if len(args) != 2:
            raise UnknownBuiltin(f"{name} takes exactly 2 arguments, got {len(args)}")
        return BuiltinCall(name, (args[0], args[1]))

    def term(self, tok) -> Term:
        kind, value, off = tok
        if kind == "var":
            return Variable(value[1:])
        if kind == "iri":
            return self._alias(IRI(value[1:-1]))
        if kind == "num":
            if re.fullmatch(r"[+-]?\d+", value):
                return Literal(value, XSD_INTEGER)
            if "e" in value.lower():
                return Literal(value, XSD_DOUBLE)
            return Literal(value, XSD_DECIMAL)
        if kind == "str":
            m = re.fullmatch(r'"((?:[^"\\\n]|\\.)*)"(?:\^\^(.+))?', value)
            lexical = re.sub(r"\\(.)", lambda e: _STR_ESCAPES.get(e.group(1), e.group(1)), m.group(1))
            dtype = m.group(2)
            if dtype:
                datatype = dtype[1:-1] if dtype.startswith("<") else self._expand(dtype, off)
                return Literal(lexical, datatype)
            return Literal(lexical)
        if kind == "name":
            if value.count(":") == 2 and value.endswith(":"):
                # "fda:hasTemperatureType:" as printed; the stray colon is dropped
                value = value[:-1]
            if ":" not in value:
                raise RuleSyntaxError(f"bare name {value!r} is not a term", off)
            return self._alias(IRI(self._expand(value, off)))
        raise RuleSyntaxError(f"unexpected {value!r}", off)

    def _expand(self, qname: str, off: int) -> str:
        try:
            return self.prefixes.expand(qname)
        except UnknownPrefix:
            raise UnknownPrefix(f"{qname} at offset {off}") from None

    def _alias(self, iri: IRI) -> IRI:
        return IRI(self.aliases.get(iri.value, iri.value))


def parse_rules(
    text: str,
    prefixes: Optional[PrefixTable] = None,
    aliases: Optional[Mapping[str, str]] = None,
) -> RuleSet:
    """Parse rule text; ``aliases`` rewrites IRIs (e.g. spelling variants)."""
    table = prefixes.copy() if prefixes is not None else PrefixTable.default()
    parser = _RuleParser(text, table, aliases or {})
    return RuleSet(parser.parse(), table)


# -- evaluation ---------------------------------------------------------------


def _numeric(term: Term) -> Decimal:
    if isinstance(term, Literal):
        value = parse_decimal(term.lexical)
        if value is not None:
            return value
    raise NonNumericComparison(f"{term!r} is not numeric")


def builtin_eval(name: str, lhs: Term, rhs: Term) -> bool:
    try:
        op = BUILTINS[name]
    except KeyError:
        raise UnknownBuiltin(name) from None
    return op(_numeric(lhs), _numeric(rhs))


def _resolve(term: Term, binding: Binding) -> Term:
    if isinstance(term, Variable):
        return binding.get(term.name, term)
    return term


def _unify(pattern: TriplePattern, t: Triple, binding: Binding) -> Optional[Binding]:
    out = binding
    for pt, value in zip(pattern, t):
        if isinstance(pt, Variable):
            bound = out.get(pt.name)
            if bound is None:
                if out is binding:
                    out = dict(binding)
                out[pt.name] = value
            elif bound != value:
                return None
        elif pt != value:
            return None
    return out


def match_body(store: TripleStore, body: Sequence[Clause]) -> Iterator[Binding]:
    """Yield every consistent binding of the body over ``store``.

    Patterns run left to right; each builtin runs as soon as its arguments
    are bound.
    """
    patterns = [c for c in body if not isinstance(c, BuiltinCall)]
    pending = [c for c in body if isinstance(c, BuiltinCall)]

    def ready(b: BuiltinCall, binding: Binding) -> bool:
        return all(not isinstance(_resolve(a, binding), Variable) for a in b.args)

    def walk(i: int, binding: Binding, waiting: List[BuiltinCall]) -> Iterator[Binding]:
        still = []
        for b in waiting:
            if ready(b, binding):
                if not builtin_eval(b.name, _resolve(b.args[0], binding), _resolve(b.args[1], binding)):
                    return
            else:
                still.append(b)
        if i == len(patterns):
            if not still:
                yield binding
            return
        pattern = patterns[i]
        probe = tuple(_resolve(x, binding) for x in pattern)
        for t in sorted(store.match(probe), key=Triple.sort_key):
            nxt = _unify(pattern, t, binding)
            if nxt is not None:
                yield from walk(i + 1, nxt, still)

    yield from walk(0, {}, pending)


def _instantiate(head: TriplePattern, binding: Binding) -> Optional[Triple]:
    s, p, o = (_resolve(x, binding) for x in head)
    if not isinstance(s, IRI) or not isinstance(p, IRI) or isinstance(o, Variable):
        return None
    return Triple(s, p, o)


@dataclass
class InferenceResult:
    inferred: TripleStore
    rounds: int
    closure: TripleStore


def apply_rules(store: TripleStore, rules: Union[RuleSet, Sequence[Rule]]) -> InferenceResult:
    closure = store.copy()
    rounds = 0
    while True:
        rounds += 1
        derived = set()
        for rule in rules:
            for binding in match_body(closure, rule.body):
                for head in rule.head:
                    t = _instantiate(head, binding)
                    if t is not None and t not in closure:
                        derived.add(t)
        if not derived:
            break
        closure.update(derived)
    inferred = TripleStore(t for t in closure if t not in store)
    return InferenceResult(inferred=inferred, rounds=rounds, closure=closure)
