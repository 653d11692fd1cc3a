"""Base ontology construction, splitting into quantity fragments, merging.

The base ontology extends SSN with one slice per sensed quantity.  Each
slice has the same shape: a sensor class, an output (observation) class,
an observed property, and a unit individual.  A fixed list of shared IRIs
forms the common core that every fragment carries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Union

from .errors import OrphanTriple, VersionMismatch
from .formats import parse_ntriples, serialize_ntriples
from .model import Quantity
from .store import TripleStore
from .terms import BASE, IRI, OWL, RDF, RDFS, SSN, XSD, Literal, Triple, q

COMMON = "Common"

UNIT_INDIVIDUALS = {
    Quantity.TEMPERATURE: "DegreeCelsius",
    Quantity.HUMIDITY: "PercentRH",
    Quantity.LIGHT: "Lux",
    Quantity.CO2: "PPM",
}

COMMON_CORE_IRIS: FrozenSet[IRI] = frozenset(
    q(name)
    for name in (
        "ssn:Sensor",
        "ssn:Observation",
        "ssn:Property",
        "ssn:hasValue",
        "ssn:observes",
        "ssn:observedProperty",
        "base:Unit",
        "base:hasUnit",
        "base:unitSymbol",
        "base:hasSensingTime",
        "base:hasLongitude",
        "base:hasLatitude",
        "base:isObservationOf",
        "base:observationProperty",
    )
)

# vocabulary used to describe the ontology itself; never decides membership
_SCAFFOLD_NAMESPACES = (RDF, RDFS, OWL, XSD)


def sensor_class(quantity: Quantity) -> IRI:
    return IRI(f"{BASE}{quantity.value}Sensor")


def output_class(quantity: Quantity) -> IRI:
    return IRI(f"{BASE}{quantity.value}Output")


def property_iri(quantity: Quantity) -> IRI:
    return IRI(f"{BASE}{quantity.value}")


def unit_iri(quantity: Quantity) -> IRI:
    return IRI(BASE + UNIT_INDIVIDUALS[quantity])


def quantity_iris(quantity: Quantity) -> FrozenSet[IRI]:
    return frozenset((sensor_class(quantity), output_class(quantity), property_iri(quantity), unit_iri(quantity)))


@dataclass(frozen=True)
class BaseOntology:
    store: TripleStore
    version: int
    quantity_index: Mapping[Quantity, FrozenSet[IRI]]

    def __hash__(self) -> int:
        return hash((self.version, len(self.store)))


@dataclass(frozen=True, eq=False)
class OntologyFragment:
    id: str
    scope: Union[Quantity, str]
    triples: TripleStore
    version: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OntologyFragment):
            return NotImplemented
        return (self.id, self.scope, self.version) == (other.id, other.scope, other.version) and self.triples == other.triples

    def __hash__(self) -> int:
        return hash((self.id, self.version))

    def covers(self, quantity: Quantity) -> bool:
        """True when this fragment holds the quantity's output class."""
        return bool(self.triples.match((output_class(quantity), q("rdf:type"), q("owl:Class"))))


def _typed(subject: IRI, cls: str) -> Triple:
    return Triple(subject, q("rdf:type"), q(cls))


def _label(subject: IRI, text: str) -> Triple:
    return Triple(subject, q("rdfs:label"), Literal(text))


def _common_core() -> List[Triple]:
    t: List[Triple] = []
    for cls in ("ssn:Sensor", "ssn:Observation", "ssn:Property", "base:Unit"):
        t.append(_typed(q(cls), "owl:Class"))
    datatype_props = {
        "ssn:hasValue": ("ssn:Observation", "xsd:double"),
        "base:hasSensingTime": ("ssn:Observation", "xsd:long"),
        "base:hasLongitude": ("ssn:Sensor", "xsd:double"),
        "base:hasLatitude": ("ssn:Sensor", "xsd:double"),
        "base:unitSymbol": ("base:Unit", "xsd:string"),
    }
    object_props = {
        "base:hasUnit": ("ssn:Observation", "base:Unit"),
        "base:isObservationOf": ("ssn:Observation", "ssn:Sensor"),
        "ssn:observes": ("ssn:Sensor", "ssn:Property"),
        "ssn:observedProperty": ("ssn:Observation", "ssn:Property"),
        "base:observationProperty": ("owl:Class", "rdf:Property"),
    }
    for name, (domain, rng) in datatype_props.items():
        t += [_typed(q(name), "owl:DatatypeProperty"), Triple(q(name), q("rdfs:domain"), q(domain)), Triple(q(name), q("rdfs:range"), q(rng))]
    for name, (domain, rng) in object_props.items():
        t += [_typed(q(name), "owl:ObjectProperty"), Triple(q(name), q("rdfs:domain"), q(domain)), Triple(q(name), q("rdfs:range"), q(rng))]
    return t


def _quantity_slice(quantity: Quantity) -> List[Triple]:
    sensor, output, prop, unit = sensor_class(quantity), output_class(quantity), property_iri(quantity), unit_iri(quantity)
    name = quantity.value
    return [
        _typed(sensor, "owl:Class"),
        Triple(sensor, q("rdfs:subClassOf"), q("ssn:Sensor")),
        Triple(sensor, q("ssn:observes"), prop),
        _label(sensor, f"{name} sensor"),
        _typed(output, "owl:Class"),
        Triple(output, q("rdfs:subClassOf"), q("ssn:Observation")),
        Triple(output, q("ssn:observedProperty"), prop),
        Triple(output, q("base:hasUnit"), unit),
        Triple(output, q("base:observationProperty"), q("ssn:hasValue")),
        Triple(output, q("base:observationProperty"), q("base:hasUnit")),
        Triple(output, q("base:observationProperty"), q("base:hasSensingTime")),
        _label(output, f"{name} output"),
        _typed(prop, "ssn:Property"),
        _label(prop, name),
        _typed(unit, "base:Unit"),
        _typed(unit, "owl:NamedIndividual"),
        Triple(unit, q("base:unitSymbol"), Literal(quantity.unit)),
    ]


def build_base_ontology(version: int = 1) -> BaseOntology:
    store = TripleStore(_common_core())
    for quantity in Quantity:
        store.update(_quantity_slice(quantity))
    return BaseOntology(store=store, version=version, quantity_index={qq: quantity_iris(qq) for qq in Quantity})


def _domain_iris(t: Triple) -> List[IRI]:
    return [x for x in t if isinstance(x, IRI) and not x.value.startswith(_SCAFFOLD_NAMESPACES)]


def classify_triple(base: BaseOntology, t: Triple) -> List[Union[Quantity, str]]:
    """Scopes a triple belongs to: the quantities it mentions, else Common."""
    mentioned = _domain_iris(t)
    scopes = [qq for qq, iris in base.quantity_index.items() if any(x in iris for x in mentioned)]
    if scopes:
        return scopes
    if mentioned and all(x in COMMON_CORE_IRIS for x in mentioned):
        return [COMMON]
    raise OrphanTriple(f"{t} mentions neither a common nor a quantity-specific IRI")


def common_core(base: BaseOntology) -> TripleStore:
    return TripleStore(t for t in base.store if classify_triple(base, t) == [COMMON])


def split_ontology(base: BaseOntology) -> Dict[Quantity, OntologyFragment]:
    buckets: Dict[Union[Quantity, str], List[Triple]] = {qq: [] for qq in base.quantity_index}
    buckets[COMMON] = []
    for t in base.store.sorted():
        for scope in classify_triple(base, t):
            buckets[scope].append(t)
    core = buckets[COMMON]
    return {
        qq: OntologyFragment(
            id=f"base-{qq.slug}",
            scope=qq,
            triples=TripleStore(core + buckets[qq]),
            version=base.version,
        )
        for qq in base.quantity_index
    }


def fragment_for(base: BaseOntology, quantity: Quantity) -> OntologyFragment:
    return split_ontology(base)[quantity]


def full_fragment(base: BaseOntology) -> OntologyFragment:
    """The whole base ontology wrapped as a fragment (what GTO OAs hold)."""
    return OntologyFragment(id="base-full", scope=COMMON, triples=base.store.copy(), version=base.version)


def merge_fragments(frags: Iterable[OntologyFragment]) -> TripleStore:
    frags = list(frags)
    versions = {f.version for f in frags}
    if len(versions) > 1:
        raise VersionMismatch(f"fragments carry versions {sorted(versions)}")
    merged = TripleStore()
    for f in frags:
        merged.update(f.triples)
    return merged


def dump_fragments(base: BaseOntology, out_dir: Union[str, Path]) -> List[Path]:
    """Write ``base-<quantity>.nt`` per fragment plus ``base-full.nt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for quantity, frag in split_ontology(base).items():
        path = out / f"{frag.id}.nt"
        path.write_bytes(serialize_ntriples(frag.triples.sorted()))
        written.append(path)
    full = out / "base-full.nt"
    full.write_bytes(serialize_ntriples(base.store.sorted()))
    written.append(full)
    return written


def load_fragment(path: Union[str, Path], scope: Union[Quantity, str], version: int = 1) -> OntologyFragment:
    path = Path(path)
    return OntologyFragment(id=path.stem, scope=scope, triples=TripleStore(parse_ntriples(path.read_bytes())), version=version)
