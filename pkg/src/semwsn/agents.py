"""Annotation, ontology and sensor agents running on the overlay simulator.

A :class:`Network` owns one :class:`~semwsn.overlay.Simulator` and every
endpoint attached to it: semantic virtual sensors, annotation agents (edge
peers), ontology agents (rendezvous peers), the sensor agent, the semantic
application and the end user.  Endpoints only talk through
:meth:`Network.send`, so the trace captures every interaction.
"""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple
from urllib.parse import quote

from .errors import (
    AppUnavailable,
    FormatError,
    FragmentUnavailable,
    InvalidModel,
    NoGTO,
    NoProvider,
    UnitNotInFragment,
)
from .formats import parse_raw, serialize_ntriples, serialize_raw
from .model import NodeClass, Quantity, RawReading, SensorKind, SensorNode, VirtualSensor
from .ontology import BaseOntology, OntologyFragment, build_base_ontology, output_class, split_ontology
from .overlay import (
    Ack,
    AnnotatedData,
    Advertise,
    CostProfile,
    Discover,
    DiscoverReply,
    DiscoveryMode,
    DiscoveryOutcome,
    Endpoint,
    EndpointKind,
    EventTrace,
    FetchFragment,
    FetchOutcome,
    Forwarded,
    FragmentReply,
    Local,
    Message,
    Notify,
    OverlaySettings,
    PeerId,
    PeerRole,
    QueryRequest,
    QueryResponse,
    RawData,
    SimEvent,
    Simulator,
    Topology,
)
from .terms import BASE, IRI, XSD_DOUBLE, XSD_LONG, Literal, Triple, q

log = logging.getLogger(__name__)

# -- annotation ---------------------------------------------------------------


@dataclass(frozen=True)
class ObservationGraph:
    observation_iri: IRI
    sensor_iri: IRI
    triples: Tuple[Triple, ...]


def _segment(text: str) -> str:
    return quote(text, safe="-._~:@!$&'*+,;=")


def observation_iri(source: str, timestamp_ms: int) -> IRI:
    return IRI(f"{BASE}obs/{_segment(source)}/{timestamp_ms}")


def sensor_iri(source: str) -> IRI:
    return IRI(f"{BASE}sensor/{_segment(source)}")


def _unit_individual(fragment: OntologyFragment, reading: RawReading) -> IRI:
    allowed = fragment.triples.objects(output_class(reading.quantity), q("base:hasUnit"))
    for unit in sorted(fragment.triples.subjects(q("base:unitSymbol"), Literal(reading.unit)), key=str):
        if unit in allowed:
            return unit
    raise UnitNotInFragment(f"fragment {fragment.id} has no unit for {reading.unit!r} ({reading.quantity.value})")


def annotate(reading: RawReading, fragment: OntologyFragment) -> ObservationGraph:
    """Turn one reading into its seven-triple observation graph."""
    unit = _unit_individual(fragment, reading)
    obs = observation_iri(reading.source, reading.timestamp_ms)
    sensor = sensor_iri(reading.source)
    triples = (
        Triple(obs, q("rdf:type"), output_class(reading.quantity)),
        Triple(obs, q("ssn:hasValue"), Literal(repr(float(reading.value)), XSD_DOUBLE)),
        Triple(obs, q("base:hasUnit"), unit),
        Triple(obs, q("base:hasSensingTime"), Literal(str(reading.timestamp_ms), XSD_LONG)),
        Triple(obs, q("base:isObservationOf"), sensor),
        Triple(sensor, q("base:hasLongitude"), Literal(repr(float(reading.longitude)), XSD_DOUBLE)),
        Triple(sensor, q("base:hasLatitude"), Literal(repr(float(reading.latitude)), XSD_DOUBLE)),
    )
    return ObservationGraph(obs, sensor, triples)


# -- role assignment ----------------------------------------------------------


def aa_name(node_id: str) -> str:
    return f"aa@{node_id}"


def oa_name(node_id: str) -> str:
    return f"oa@{node_id}"


@dataclass(frozen=True)
class RolePolicy:
    replication_factor: int = 2

    def __post_init__(self) -> None:
        if self.replication_factor < 1:
            raise InvalidModel("replication_factor must be >= 1")


@dataclass(frozen=True)
class OASpec:
    name: str
    host: str
    quantities: FrozenSet[Quantity]
    holds_full: bool


@dataclass
class RoleAssignment:
    nodes: List[SensorNode]
    aas: Dict[str, str]  # AA name -> host node id
    oas: Dict[str, OASpec]
    delegation: Dict[str, str]  # Type A node id -> AA name
    sensor_aa: Dict[str, str]  # semantic virtual sensor id -> AA name
    replication: Dict[Quantity, int]  # Type B OAs holding each fragment

    def under_replicated(self, policy: RolePolicy) -> Dict[Quantity, int]:
        return {qq: n for qq, n in self.replication.items() if n < policy.replication_factor}

    def served_by(self, aa: str) -> List[str]:
        return sorted(s for s, a in self.sensor_aa.items() if a == aa)


def _distance2(a: SensorNode, b: SensorNode) -> float:
    return (a.longitude - b.longitude) ** 2 + (a.latitude - b.latitude) ** 2


def assign_roles(
    nodes: Sequence[SensorNode],
    policy: RolePolicy = RolePolicy(),
    sensors: Sequence[VirtualSensor] = (),
) -> RoleAssignment:
    gtos = sorted((n for n in nodes if n.node_class is NodeClass.GTO), key=lambda n: n.id)
    if not gtos:
        raise NoGTO("at least one GTO node is required")
    updated, aas, oas, delegation = [], {}, {}, {}
    replication = {qq: 0 for qq in Quantity}
    for node in sorted(nodes, key=lambda n: n.id):
        if node.node_class is NodeClass.TYPE_A:
            nearest = min(gtos, key=lambda g: (_distance2(node, g), g.id))
            delegation[node.id] = aa_name(nearest.id)
            updated.append(SensorNode(node.id, node.node_class, node.capabilities, node.longitude, node.latitude, False, False))
            continue
        full = node.node_class is NodeClass.GTO
        held = frozenset(Quantity) if full else frozenset(node.capabilities)
        aas[aa_name(node.id)] = node.id
        oas[oa_name(node.id)] = OASpec(oa_name(node.id), node.id, held, full)
        if not full:
            for qq in held:
                replication[qq] += 1
        updated.append(SensorNode(node.id, node.node_class, node.capabilities, node.longitude, node.latitude, True, True))
    by_id = {n.id: n for n in updated}
    sensor_aa = {}
    for vs in sensors:
        if vs.kind is not SensorKind.SEMANTIC:
            continue
        host = by_id.get(vs.host)
        if host is None:
            raise InvalidModel(f"sensor {vs.id} names unknown host {vs.host}")
        sensor_aa[vs.id] = delegation[host.id] if host.node_class is NodeClass.TYPE_A else aa_name(host.id)
    assignment = RoleAssignment(updated, aas, oas, delegation, sensor_aa, replication)
    short = assignment.under_replicated(policy)
    if short:
        log.info("fragments below replication factor %d: %s", policy.replication_factor,
                 {qq.value: n for qq, n in short.items()})
    return assignment


# -- agents -------------------------------------------------------------------


class _Endpoint:
    kind: EndpointKind

    def __init__(self, net: "Network", name: str):
        self.net = net
        self.name = name

    @property
    def sim(self) -> Simulator:
        return self.net.sim

    def send(self, dst: str, payload: Message, at: Optional[int] = None) -> SimEvent:
        return self.net.send(self.name, dst, payload, at=at)

    def handle(self, event: SimEvent) -> None:  # pragma: no cover - overridden
        raise NotImplementedError


@dataclass
class _Waiting:
    reading: RawReading
    corr: str


class AnnotationAgent(_Endpoint):
    kind = EndpointKind.AA

    def __init__(self, net: "Network", name: str, host: str, host_class: NodeClass,
                 rendezvous: Sequence[str] = (), sa: str = "sa"):
        if not host_class.can_host_agents:
            raise InvalidModel(f"{name}: Type A nodes cannot host an AA")
        super().__init__(net, name)
        self.peer = PeerId(name, PeerRole.EDGE)
        self.host = host
        self.host_class = host_class
        self.rendezvous = list(rendezvous)
        self.sa = sa
        self.serves: set = set()
        self.cache: Dict[Quantity, OntologyFragment] = {}
        self.provider_table: Dict[Quantity, str] = {}
        self.pending: Dict[Quantity, List[_Waiting]] = defaultdict(list)
        self.inflight: set = set()
        self.origin: Dict[str, str] = {}
        self.discoveries: List[DiscoveryOutcome] = []
        self.fetches: List[FetchOutcome] = []
        self._open: Dict[str, tuple] = {}
        self._req = itertools.count(1)

    @property
    def annotate_us(self) -> int:
        field_name = "annotate_gto_ms" if self.host_class is NodeClass.GTO else "annotate_typeb_ms"
        return self.net.profile.us(field_name)

    def preload(self, fragments: Iterable[OntologyFragment]) -> None:
        for frag in fragments:
            for qq in Quantity:
                if frag.covers(qq):
                    self.cache[qq] = frag

    # public entry points used by tests and the harness
    def start_discovery(self, quantity: Quantity, then_fetch: bool = False) -> str:
        if not self.rendezvous:
            raise NoProvider(f"{self.name} is not connected to any rendezvous peer")
        req = f"{self.name}#{next(self._req)}"
        self._open[req] = ("discover", quantity, self.sim.now, then_fetch)
        self.send(self.rendezvous[0], Discover(quantity, req))
        return req

    def start_fetch(self, quantity: Quantity, oa: str) -> str:
        req = f"{self.name}#{next(self._req)}"
        self._open[req] = ("fetch", quantity, self.sim.now, oa)
        self.send(oa, FetchFragment(quantity, req))
        return req

    def handle(self, event: SimEvent) -> None:
        p = event.payload
        if isinstance(p, RawData):
            self._on_raw(event.src, p)
        elif isinstance(p, DiscoverReply):
            self._on_discover_reply(p)
        elif isinstance(p, FragmentReply):
            self._on_fragment_reply(p)
        elif isinstance(p, Advertise):
            for quantity, version in p.catalog:
                if version == self.net.base.version:
                    self.provider_table.setdefault(quantity, event.src)
        elif isinstance(p, Ack):
            sensor = self.origin.pop(p.corr, None)
            if sensor is not None:
                self.send(sensor, Ack(p.code, p.corr))
        elif isinstance(p, Local):
            if p.task == "annotate":
                self._annotated(p)
            elif p.task == "discover":
                self.start_discovery(p.data)
            elif p.task == "fetch":
                self.start_fetch(*p.data)

    def _on_raw(self, sensor: str, msg: RawData) -> None:
        try:
            readings = parse_raw(msg.body, msg.wire_format)
        except FormatError as exc:
            self.sim.note(self.name, "MalformedRaw", f"corr={msg.corr} {exc}")
            return
        for reading in readings:
            corr = reading.key
            self.origin[corr] = sensor
            self.serves.add(reading.source)
            self.on_reading(reading, corr)

    def on_reading(self, reading: RawReading, corr: str) -> None:
        fragment = self.cache.get(reading.quantity)
        if fragment is not None and fragment.version != self.net.base.version:
            self.sim.note(self.name, "StaleFragment", f"{fragment.id} v{fragment.version}")
            del self.cache[reading.quantity]
            fragment = None
        if fragment is not None:
            self._start_annotation(reading, corr, fragment)
            return
        self.pending[reading.quantity].append(_Waiting(reading, corr))
        if reading.quantity not in self.inflight:
            self.inflight.add(reading.quantity)
            self._acquire(reading.quantity)

    def _acquire(self, quantity: Quantity) -> None:
        mode = self.net.settings.discovery_mode
        if mode is DiscoveryMode.PROACTIVE:
            provider = self.provider_table.get(quantity)
            if provider is None:
                self._fail(quantity, "NoProvider")
            else:
                self.start_fetch(quantity, provider)
        elif mode is DiscoveryMode.RELAY:
            if not self.rendezvous:
                self._fail(quantity, "NoProvider")
            else:
                self.start_fetch(quantity, self.rendezvous[0])
        else:
            if not self.rendezvous:
                self._fail(quantity, "NoProvider")
            else:
                self.start_discovery(quantity, then_fetch=True)

    def _on_discover_reply(self, reply: DiscoverReply) -> None:
        opened = self._open.pop(reply.req, None)
        if opened is None:
            return
        _, quantity, started, then_fetch = opened
        self.discoveries.append(DiscoveryOutcome(self.name, quantity, reply.req, reply.oa, reply.has, started, self.sim.now))
        if not then_fetch:
            return
        if reply.has and reply.oa:
            self.start_fetch(quantity, reply.oa)
        else:
            self._fail(quantity, "NoProvider")

    def _on_fragment_reply(self, reply: FragmentReply) -> None:
        opened = self._open.pop(reply.req, None)
        if opened is None:
            return
        _, quantity, started, oa = opened
        self.fetches.append(FetchOutcome(self.name, quantity, reply.req, oa, reply.fragment, started, self.sim.now))
        frag = reply.fragment
        if frag is None:
            self._fail(quantity, "FragmentUnavailable")
            return
        if frag.version != self.net.base.version:
            self.sim.note(self.name, "StaleFragment", f"{frag.id} v{frag.version}")
            self._fail(quantity, "StaleFragment")
            return
        if not frag.covers(quantity):
            self._fail(quantity, "FragmentUnavailable")
            return
        self.cache[quantity] = frag
        self.inflight.discard(quantity)
        for waiting in self.pending.pop(quantity, []):
            self._start_annotation(waiting.reading, waiting.corr, frag)

    def _fail(self, quantity: Quantity, kind: str) -> None:
        self.inflight.discard(quantity)
        waiting = self.pending.pop(quantity, [])
        if not waiting:
            self.sim.note(self.name, kind, f"q={quantity.value}")
        for w in waiting:
            self.sim.note(self.name, kind, f"q={quantity.value} corr={w.corr}")
            self.origin.pop(w.corr, None)

    def _start_annotation(self, reading: RawReading, corr: str, fragment: OntologyFragment) -> None:
        span = self.annotate_us
        self.sim.timer(self.name, Local("annotate", corr, span, (reading, fragment)), self.sim.now + span)

    def _annotated(self, task: Local) -> None:
        reading, fragment = task.data
        try:
            graph = annotate(reading, fragment)
        except UnitNotInFragment as exc:
            self.sim.note(self.name, "UnitNotInFragment", f"corr={task.corr} {exc}")
            self.origin.pop(task.corr, None)
            return
        self.send(self.sa, AnnotatedData(serialize_ntriples(graph.triples), task.corr))


@dataclass
class _Forward:
    upstream: str
    waiting: set
    request: Message
    hops: int
    answered: bool = False


class OntologyAgent(_Endpoint):
    kind = EndpointKind.OA

    def __init__(self, net: "Network", name: str, host: str, host_class: NodeClass,
                 held: Mapping[Quantity, OntologyFragment], holds_full: bool = False):
        if not host_class.can_host_agents:
            raise InvalidModel(f"{name}: Type A nodes cannot host an OA")
        if holds_full != (host_class is NodeClass.GTO):
            raise InvalidModel(f"{name}: exactly the GTO-hosted OAs hold the full base ontology")
        super().__init__(net, name)
        self.peer = PeerId(name, PeerRole.RENDEZVOUS)
        self.host = host
        self.host_class = host_class
        self.held: Dict[Quantity, OntologyFragment] = dict(held)
        self.holds_full = holds_full
        self.neighbors: List[str] = []
        self.busy_until = 0
        self.seen: set = set()
        self.forwards: Dict[str, _Forward] = {}
        self.served = 0

    def catalog(self) -> Tuple[Tuple[Quantity, int], ...]:
        return tuple((qq, f.version) for qq, f in sorted(self.held.items(), key=lambda kv: kv[0].value))

    def edges(self) -> List[str]:
        return sorted(a.name for a in self.net.annotation_agents() if self.name in a.rendezvous)

    def handle(self, event: SimEvent) -> None:
        p = event.payload
        if isinstance(p, (RawData, AnnotatedData)):
            raise InvalidModel(f"{self.name} received sensor data; OAs never handle it")
        if isinstance(p, (Discover, FetchFragment)):
            self.serve(event.src, p, 0)
        elif isinstance(p, Forwarded):
            if p.inner.req in self.seen:
                self.send(event.src, self._negative(p.inner))
            else:
                self.serve(event.src, p.inner, p.hops)
        elif isinstance(p, (DiscoverReply, FragmentReply)):
            self._on_reply(event.src, p)
        elif isinstance(p, Local) and p.task == "advertise":
            self.advertise()

    def serve(self, upstream: str, request: Message, hops: int) -> None:
        """Queue ``request`` behind earlier ones; answer, forward, or refuse."""
        self.seen.add(request.req)
        start = max(self.sim.now, self.busy_until)
        done = start + self.net.profile.us("oa_service_ms")
        self.busy_until = done
        self.served += 1
        if request.quantity in self.held:
            self.send(upstream, self._positive(request), at=done)
            return
        candidates = []
        if hops < self.net.settings.max_hops:
            candidates = [n for n in self.neighbors if n != upstream]
        if not candidates:
            self.send(upstream, self._negative(request), at=done)
            if hops == 0:
                self.sim.note(self.name, "NoProvider", f"q={request.quantity.value} req={request.req}")
            return
        self.forwards[request.req] = _Forward(upstream, set(candidates), request, hops)
        for n in candidates:
            self.send(n, Forwarded(request, hops + 1), at=done)

    def _positive(self, request: Message) -> Message:
        if isinstance(request, Discover):
            return DiscoverReply(request.quantity, request.req, self.name, True)
        return FragmentReply(request.quantity, request.req, self.held[request.quantity], self.name)

    def _negative(self, request: Message) -> Message:
        if isinstance(request, Discover):
            return DiscoverReply(request.quantity, request.req, None, False)
        return FragmentReply(request.quantity, request.req, None, None)

    def _on_reply(self, src: str, reply: Message) -> None:
        state = self.forwards.get(reply.req)
        if state is None:
            return
        state.waiting.discard(src)
        if reply.has and not state.answered:
            state.answered = True
            self.send(state.upstream, reply)
        if not state.waiting:
            del self.forwards[reply.req]
            if not state.answered:
                self.send(state.upstream, self._negative(state.request))
                if state.hops == 0:
                    self.sim.note(self.name, "NoProvider", f"q={state.request.quantity.value} req={state.request.req}")

    def advertise(self) -> None:
        catalog = self.catalog()
        if catalog:
            for edge in self.edges():
                self.send(edge, Advertise(catalog))
        if self.sim.has_pending(ignore=_is_advertising):
            nxt = self.sim.now + self.net.profile.us("advertise_interval_ms")
            self.sim.timer(self.name, Local("advertise"), nxt)


def _is_advertising(event: SimEvent) -> bool:
    p = event.payload
    return isinstance(p, Advertise) or (isinstance(p, Local) and p.task == "advertise")


class SensorAgent(_Endpoint):
    kind = EndpointKind.SA

    def __init__(self, net: "Network", name: str = "sa", app: str = "app"):
        super().__init__(net, name)
        self.peer = PeerId(name, PeerRole.EDGE)
        self.app = app
        self.origin: Dict[str, str] = {}

    def handle(self, event: SimEvent) -> None:
        p = event.payload
        if isinstance(p, AnnotatedData):
            app = self.net.endpoints.get(self.app)
            if app is None or not getattr(app, "available", False):
                self.sim.note(self.name, "AppUnavailable", f"corr={p.corr}")
                self.send(event.src, Ack(503, p.corr))
                return
            self.origin[p.corr] = event.src
            self.send(self.app, p)
        elif isinstance(p, Ack):
            aa = self.origin.pop(p.corr, None)
            if aa is not None:
                self.send(aa, p)


class SensorEndpoint(_Endpoint):
    """A semantic virtual sensor: emits raw payloads and collects acks."""

    kind = EndpointKind.SENSOR

    def __init__(self, net: "Network", sensor: VirtualSensor, host_class: NodeClass, target: str):
        super().__init__(net, sensor.id)
        self.sensor = sensor
        self.host_class = host_class
        self.target = target
        self.acks: List[Tuple[str, int, int]] = []

    def emit(self, reading: RawReading, at: Optional[int] = None) -> SimEvent:
        body = serialize_raw(reading, self.sensor.wire_format)
        return self.send(self.target, RawData(body, self.sensor.wire_format.value, reading.key), at=at)

    def handle(self, event: SimEvent) -> None:
        p = event.payload
        if isinstance(p, Ack):
            self.acks.append((p.corr, p.code, self.sim.now))


class AppEndpoint(_Endpoint):
    """Binds a semantic application object into the simulation.

    ``app`` must provide ``ingest(body) -> int``, ``ingest_raw(body,
    wire_format) -> int``, ``notifications(since_ms)``, ``status(iri)`` and
    ``query(text) -> (code, csv)``.
    """

    kind = EndpointKind.APP

    def __init__(self, net: "Network", app: Any, name: str = "app", user: Optional[str] = None,
                 available: bool = True, delay: Optional[Callable[[], int]] = None):
        super().__init__(net, name)
        self.app = app
        self.user = user
        self.available = available
        self.delay = delay or (lambda: 0)
        self._notified = 0

    def handle(self, event: SimEvent) -> None:
        p = event.payload
        if isinstance(p, AnnotatedData):
            code = self.app.ingest(p.body)
            self.send(event.src, Ack(code, p.corr), at=self.sim.now + self.delay())
            self._push_notifications()
        elif isinstance(p, RawData):
            span = self.net.profile.us("annotate_app_ms")
            self.sim.timer(self.name, Local("annotate", p.corr, span, (event.src, p)), self.sim.now + span)
        elif isinstance(p, Local) and p.task == "annotate":
            sensor, raw = p.data
            code = self.app.ingest_raw(raw.body, raw.wire_format)
            self.send(sensor, Ack(code, raw.corr), at=self.sim.now + self.delay())
            self._push_notifications()
        elif isinstance(p, QueryRequest):
            code, payload = self.app.request(p.text)
            self.send(event.src, QueryResponse(code, payload))

    def _push_notifications(self) -> None:
        pending = self.app.notification_log[self._notified:]
        self._notified += len(pending)
        if self.user is None:
            return
        for n in pending:
            self.send(self.user, Notify(n))


class UserEndpoint(_Endpoint):
    kind = EndpointKind.USER

    def __init__(self, net: "Network", name: str = "user", app: str = "app", ask_status: bool = True):
        super().__init__(net, name)
        self.app = app
        self.ask_status = ask_status
        self.notifications: List[Any] = []
        self.responses: List[Tuple[int, str]] = []

    def handle(self, event: SimEvent) -> None:
        p = event.payload
        if isinstance(p, Notify):
            self.notifications.append(p.notification)
            if self.ask_status:
                self.send(self.app, QueryRequest(f"STATUS {p.notification.event_iri}"))
        elif isinstance(p, QueryResponse):
            self.responses.append((p.code, p.payload))


# -- network assembly ---------------------------------------------------------


class Network:
    def __init__(self, profile: CostProfile, settings: Optional[OverlaySettings] = None,
                 base: Optional[BaseOntology] = None, horizon_ms: Optional[float] = None):
        self.profile = profile
        self.settings = settings or OverlaySettings()
        self.base = base or build_base_ontology()
        self.fragments = split_ontology(self.base)
        self.sim = Simulator(horizon_ms=horizon_ms)
        self.topology = Topology(profile, self.settings)
        self.endpoints: Dict[str, _Endpoint] = {}

    def _attach(self, endpoint: _Endpoint, host: str = "", host_class: Optional[NodeClass] = None) -> _Endpoint:
        self.topology.add(Endpoint(endpoint.name, endpoint.kind, host, host_class))
        self.endpoints[endpoint.name] = endpoint
        self.sim.register(endpoint.name, endpoint.handle)
        return endpoint

    def __getitem__(self, name: str) -> _Endpoint:
        return self.endpoints[name]

    def send(self, src: str, dst: str, payload: Message, at: Optional[int] = None) -> SimEvent:
        if dst not in self.endpoints:
            raise InvalidModel(f"unknown endpoint {dst}")
        return self.sim.send(src, dst, payload, self.topology.latency(src, dst), at=at)

    # builders
    def add_oa(self, name: str, host: str, host_class: NodeClass, quantities: Iterable[Quantity],
               holds_full: bool = False) -> OntologyAgent:
        held = {qq: self.fragments[qq] for qq in sorted(set(quantities), key=lambda x: x.value)}
        return self._attach(OntologyAgent(self, name, host, host_class, held, holds_full), host, host_class)

    def add_aa(self, name: str, host: str, host_class: NodeClass, rendezvous: Sequence[str] = (),
               sa: str = "sa") -> AnnotationAgent:
        return self._attach(AnnotationAgent(self, name, host, host_class, rendezvous, sa), host, host_class)

    def add_sa(self, name: str = "sa", app: str = "app") -> SensorAgent:
        return self._attach(SensorAgent(self, name, app))

    def add_app(self, app: Any, name: str = "app", user: Optional[str] = None, available: bool = True,
                delay: Optional[Callable[[], int]] = None) -> AppEndpoint:
        return self._attach(AppEndpoint(self, app, name, user, available, delay))

    def add_user(self, name: str = "user", app: str = "app", ask_status: bool = True) -> UserEndpoint:
        return self._attach(UserEndpoint(self, name, app, ask_status))

    def add_sensor(self, sensor: VirtualSensor, host_class: NodeClass, target: str) -> SensorEndpoint:
        return self._attach(SensorEndpoint(self, sensor, host_class, target), sensor.host, host_class)

    def connect_oas(self, adjacency: Optional[Mapping[str, Sequence[str]]] = None) -> None:
        """Wire OA neighbours; full mesh unless an adjacency map is given."""
        names = sorted(oa.name for oa in self.ontology_agents())
        if adjacency is None:
            for oa in self.ontology_agents():
                oa.neighbors = [n for n in names if n != oa.name]
            return
        links = defaultdict(set)
        for a, bs in adjacency.items():
            for b in bs:
                if a not in names or b not in names:
                    raise InvalidModel(f"adjacency names unknown OA {a if a not in names else b}")
                if a != b:
                    links[a].add(b)
                    links[b].add(a)
        for oa in self.ontology_agents():
            oa.neighbors = sorted(links.get(oa.name, ()))

    def annotation_agents(self) -> List[AnnotationAgent]:
        return [e for e in self.endpoints.values() if isinstance(e, AnnotationAgent)]

    def ontology_agents(self) -> List[OntologyAgent]:
        return [e for e in self.endpoints.values() if isinstance(e, OntologyAgent)]

    def sensors(self) -> List[SensorEndpoint]:
        return [e for e in self.endpoints.values() if isinstance(e, SensorEndpoint)]

    def start_advertising(self) -> None:
        for oa in sorted(self.ontology_agents(), key=lambda o: o.name):
            self.sim.timer(oa.name, Local("advertise"), self.sim.now)

    def at(self, time_us: int, peer: str, task: Local) -> SimEvent:
        return self.sim.timer(peer, task, time_us)

    def run(self) -> EventTrace:
        return self.sim.run_until_idle()


@dataclass
class DeploymentOptions:
    """How a deployment is turned into a running network."""

    policy: RolePolicy = field(default_factory=RolePolicy)
    local_ontology: bool = False  # AAs start with their host's fragments cached
    direct_to_app: bool = False  # sensors bypass the overlays and send raw data to the app
    rendezvous: Mapping[str, Sequence[str]] = field(default_factory=dict)
    oa_adjacency: Optional[Mapping[str, Sequence[str]]] = None


def build_network(deployment, profile: CostProfile, settings: Optional[OverlaySettings] = None,
                  options: Optional[DeploymentOptions] = None, app: Any = None,
                  user: bool = False, app_available: bool = True,
                  app_delay: Optional[Callable[[], int]] = None) -> Tuple[Network, RoleAssignment]:
    options = options or DeploymentOptions()
    deployment.validate()
    assignment = assign_roles(deployment.nodes, options.policy, deployment.sensors)
    net = Network(profile, settings)
    nodes = {n.id: n for n in assignment.nodes}
    gto_oas = sorted((spec for spec in assignment.oas.values() if spec.holds_full), key=lambda s: s.name)

    for spec in sorted(assignment.oas.values(), key=lambda s: s.name):
        net.add_oa(spec.name, spec.host, nodes[spec.host].node_class, spec.quantities, spec.holds_full)
    net.connect_oas(options.oa_adjacency)

    for name, host in sorted(assignment.aas.items()):
        node = nodes[host]
        rendezvous = options.rendezvous.get(name)
        if rendezvous is None:
            home = min(gto_oas, key=lambda s: (_distance2(node, nodes[s.host]), s.name))
            rendezvous = [home.name]
        aa = net.add_aa(name, host, node.node_class, rendezvous)
        if options.local_ontology:
            oa = net.endpoints[oa_name(host)]
            aa.preload(oa.held.values())

    net.add_sa("sa", "app")
    if app is not None:
        net.add_app(app, "app", user="user" if user else None, available=app_available, delay=app_delay)
    if user:
        net.add_user("user", "app")

    for vs in deployment.sensors:
        if vs.kind is not SensorKind.SEMANTIC:
            continue
        target = "app" if options.direct_to_app else assignment.sensor_aa[vs.id]
        net.add_sensor(vs, nodes[vs.host].node_class, target)
        if not options.direct_to_app:
            net.endpoints[target].serves.add(vs.id)
    if settings is not None and settings.discovery_mode is DiscoveryMode.PROACTIVE:
        net.start_advertising()
    return net, assignment


# -- single-operation drivers -------------------------------------------------


def oa_advertise(net: Network, oa: str) -> EventTrace:
    """Start periodic advertising at ``oa`` and run the network to idle."""
    net.sim.timer(oa, Local("advertise"), net.sim.now)
    return net.run()


def oa_discover(net: Network, aa: str, quantity: Quantity) -> DiscoveryOutcome:
    agent: AnnotationAgent = net.endpoints[aa]
    req = agent.start_discovery(quantity)
    net.run()
    outcome = next(o for o in agent.discoveries if o.req == req)
    if not outcome.has:
        raise NoProvider(f"no OA within {net.settings.max_hops} hops holds {quantity.value}")
    return outcome


def fetch_fragment(net: Network, aa: str, oa: str, quantity: Quantity) -> FetchOutcome:
    agent: AnnotationAgent = net.endpoints[aa]
    req = agent.start_fetch(quantity, oa)
    net.run()
    outcome = next(o for o in agent.fetches if o.req == req)
    if outcome.fragment is None:
        raise FragmentUnavailable(f"{oa} could not supply {quantity.value}")
    return outcome


def aa_on_raw(net: Network, sensor: str, reading: RawReading) -> List[AnnotatedData]:
    """Emit ``reading`` from a sensor endpoint, run, and return what reached the SA."""
    endpoint: SensorEndpoint = net.endpoints[sensor]
    endpoint.emit(reading)
    trace = net.run()
    return [r.payload for r in trace if r.kind == "AnnotatedData" and r.payload.corr == reading.key
            and isinstance(net.endpoints.get(r.dst), SensorAgent)]


def sa_forward(net: Network, aa: str, data: AnnotatedData, sa: str = "sa") -> int:
    """Deliver annotated data from ``aa`` to the SA and return the ack code the AA sees."""
    net.send(aa, sa, data)
    trace = net.run()
    codes = [r.payload.code for r in trace if r.kind == "Ack" and r.dst == aa and r.payload.corr == data.corr]
    if not codes:
        raise AppUnavailable("no acknowledgement reached the AA")
    return codes[-1]
