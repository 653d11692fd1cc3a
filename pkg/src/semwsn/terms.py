"""RDF terms, triples and prefix handling.

Terms are small frozen values so they can be hashed into the store indexes
and shared freely between the simulator, the reasoner and the query engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import Dict, Iterator, Mapping, Optional, Union

from .errors import InvalidModel, NonGroundTriple, UnknownPrefix

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"
SSN = "http://purl.oclc.org/NET/ssnx/ssn#"
BASE = "http://www.semanticweb.org/WirelessSensor/BaseOntology#"
FDA = "http://www.semanticweb.org/WirelessSensor/FireApplication#"

XSD_STRING = XSD + "string"
XSD_DOUBLE = XSD + "double"
XSD_DECIMAL = XSD + "decimal"
XSD_INTEGER = XSD + "integer"
XSD_LONG = XSD + "long"


@dataclass(frozen=True)
class IRI:
    value: str

    def __post_init__(self) -> None:
        if not self.value or any(c in self.value for c in '<>" {}|\\^`\n\r\t'):
            raise InvalidModel(f"invalid IRI {self.value!r}")

    def __str__(self) -> str:
        return self.value

    def n3(self) -> str:
        return f"<{self.value}>"


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: str = XSD_STRING

    def __str__(self) -> str:
        return self.lexical

    def numeric(self) -> Optional[Decimal]:
        """Decimal value of the lexical form, or None when it is not a number."""
        return parse_decimal(self.lexical)


@dataclass(frozen=True)
class Variable:
    name: str

    def __str__(self) -> str:
        return "?" + self.name


Term = Union[IRI, Literal, Variable]
GroundTerm = Union[IRI, Literal]


def parse_decimal(text: str) -> Optional[Decimal]:
    try:
        value = Decimal(text.strip())
    except (InvalidOperation, ValueError):
        return None
    if not value.is_finite():
        return None
    return value


def is_ground(term: Term) -> bool:
    return not isinstance(term, Variable)


@dataclass(frozen=True)
class Triple:
    subject: IRI
    predicate: IRI
    object: GroundTerm

    def __post_init__(self) -> None:
        for term in (self.subject, self.predicate, self.object):
            if isinstance(term, Variable):
                raise NonGroundTriple(f"variable {term} in triple")
        if not isinstance(self.subject, IRI) or not isinstance(self.predicate, IRI):
            raise InvalidModel("subject and predicate must be IRIs")
        if not isinstance(self.object, (IRI, Literal)):
            raise InvalidModel(f"bad object term {self.object!r}")

    def __iter__(self) -> Iterator[GroundTerm]:
        yield self.subject
        yield self.predicate
        yield self.object

    def sort_key(self) -> tuple:
        return tuple(term_key(t) for t in self)


def term_key(term: Term) -> tuple:
    """Total order over terms, used wherever output must be deterministic."""
    if isinstance(term, IRI):
        return (0, term.value, "")
    if isinstance(term, Literal):
        return (1, term.lexical, term.datatype)
    return (2, term.name, "")


DEFAULT_PREFIXES: Dict[str, str] = {
    "rdf": RDF,
    "rdfs": RDFS,
    "owl": OWL,
    "xsd": XSD,
    "ssn": SSN,
    "base": BASE,
    "fda": FDA,
}
MANDATORY_PREFIXES = ("rdf", "xsd", "ssn", "base", "fda")


class PrefixTable:
    """Prefix to namespace mapping with QName expansion and compaction."""

    def __init__(self, mapping: Optional[Mapping[str, str]] = None):
        self._ns: Dict[str, str] = {}
        for prefix, ns in (mapping if mapping is not None else DEFAULT_PREFIXES).items():
            self.bind(prefix, ns)

    @classmethod
    def default(cls) -> "PrefixTable":
        return cls(DEFAULT_PREFIXES)

    def bind(self, prefix: str, namespace: str) -> None:
        if "://" not in namespace or namespace[-1] not in "#/":
            raise InvalidModel(f"namespace for {prefix!r} must be absolute and end in '#' or '/'")
        self._ns[prefix] = namespace

    def copy(self) -> "PrefixTable":
        return PrefixTable(self._ns)

    def __contains__(self, prefix: str) -> bool:
        return prefix in self._ns

    def __getitem__(self, prefix: str) -> str:
        try:
            return self._ns[prefix]
        except KeyError:
            raise UnknownPrefix(prefix) from None

    def items(self):
        return self._ns.items()

    def expand(self, qname: str) -> str:
        prefix, sep, local = qname.partition(":")
        if not sep:
            raise UnknownPrefix(f"{qname!r} is not a prefixed name")
        if prefix not in self._ns:
            raise UnknownPrefix(prefix)
        return self._ns[prefix] + local

    def iri(self, qname: str) -> IRI:
        return IRI(self.expand(qname))

    def compact(self, iri: str) -> Optional[str]:
        # longest namespace wins so nested namespaces compact predictably
        best = None
        for prefix, ns in self._ns.items():
            if iri.startswith(ns) and (best is None or len(ns) > len(self._ns[best])):
                best = prefix
        if best is None:
            return None
        return f"{best}:{iri[len(self._ns[best]):]}"


def expand_qname(qname: str, prefixes: PrefixTable) -> str:
    return prefixes.expand(qname)


_DEFAULT = PrefixTable.default()


def q(qname: str) -> IRI:
    """Shorthand for an IRI from a QName over the default prefixes."""
    return _DEFAULT.iri(qname)
