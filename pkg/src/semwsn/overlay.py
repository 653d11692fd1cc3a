"""Deterministic discrete-event substrate for the annotation and ontology overlays.

Simulated time is kept in integer microseconds so stage sums are exact;
public helpers speak milliseconds.  Events run in ``(deliver_at, seq)``
order, which makes two runs with the same inputs produce identical traces.
"""

from __future__ import annotations

import configparser
import dataclasses
import heapq
import itertools
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import ConfigInvalid, HorizonExceeded, TimeTravel
from .model import NodeClass, Quantity


def ms_to_us(ms: float) -> int:
    return int(round(ms * 1000))


def us_to_ms(us: int) -> float:
    return us / 1000


# -- cost profile -------------------------------------------------------------


@dataclass(frozen=True)
class CostProfile:
    """Per-hop and per-task latencies (ms).

    The defaults are the calibrated values shipped as ``profiles/paper.cfg``.
    ``link_typeb_uplink_ms`` is the radio hop out of a Type B node and
    ``link_app_user_ms`` the application to end-user hop.
    """

    link_sensor_aa_ms: float = 20.0
    link_typeb_uplink_ms: float = 267.88
    link_aa_oa_ms: float = 40.0
    link_oa_oa_ms: float = 40.0
    link_aa_sa_ms: float = 309.56
    link_sa_app_ms: float = 1447.56
    link_app_user_ms: float = 50.0
    annotate_gto_ms: float = 8.0
    annotate_typeb_ms: float = 525.0
    annotate_app_ms: float = 4.0
    oa_service_ms: float = 14.0
    advertise_interval_ms: float = 1000.0

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ConfigInvalid(f"{f.name} must be a finite value >= 0, got {value!r}")

    def us(self, name: str) -> int:
        return ms_to_us(getattr(self, name))

    def replace(self, **changes: float) -> "CostProfile":
        return dataclasses.replace(self, **changes)

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in dataclasses.fields(cls)]


class DiscoveryMode(str, Enum):
    REACTIVE = "reactive"
    PROACTIVE = "proactive"
    RELAY = "relay"  # AA asks its home OA for the fragment directly


@dataclass(frozen=True)
class OverlaySettings:
    discovery_mode: DiscoveryMode = DiscoveryMode.REACTIVE
    max_hops: int = 3
    seed: int = 0
    jitter_ms: float = 0.0

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "discovery_mode", DiscoveryMode(self.discovery_mode))
        except ValueError:
            raise ConfigInvalid(f"unknown discovery mode {self.discovery_mode!r}") from None
        if self.max_hops < 0:
            raise ConfigInvalid("max_hops must be >= 0")
        if self.jitter_ms < 0:
            raise ConfigInvalid("jitter_ms must be >= 0")


def load_profile(path: Union[str, Path]) -> Tuple[CostProfile, OverlaySettings]:
    """Read ``[profile]`` and optional ``[overlay]`` sections of an INI file."""
    parser = configparser.ConfigParser()
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid(f"profile {path} not found")
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    if not parser.has_section("profile"):
        raise ConfigInvalid(f"{path}: missing [profile] section")
    known = set(CostProfile.field_names())
    values = {}
    for key, raw in parser.items("profile"):
        if key not in known:
            raise ConfigInvalid(f"{path}: unknown profile field {key!r}")
        try:
            values[key] = float(raw)
        except ValueError:
            raise ConfigInvalid(f"{path}: {key} is not a number") from None
    profile = CostProfile(**values)
    settings = OverlaySettings()
    if parser.has_section("overlay"):
        sec = parser["overlay"]
        try:
            settings = OverlaySettings(
                discovery_mode=DiscoveryMode(sec.get("discovery_mode", "reactive").strip().lower()),
                max_hops=sec.getint("max_hops", 3),
                seed=sec.getint("seed", 0),
                jitter_ms=sec.getfloat("jitter_ms", 0.0),
            )
        except ValueError as exc:
            raise ConfigInvalid(f"{path}: {exc}") from None
    return profile, settings


def dump_profile(profile: CostProfile, settings: Optional[OverlaySettings] = None) -> str:
    lines = ["[profile]"]
    lines += [f"{name} = {getattr(profile, name)!r}" for name in CostProfile.field_names()]
    if settings is not None:
        lines += [
            "",
            "[overlay]",
            f"discovery_mode = {settings.discovery_mode.value}",
            f"max_hops = {settings.max_hops}",
            f"seed = {settings.seed}",
            f"jitter_ms = {settings.jitter_ms!r}",
        ]
    return "\n".join(lines) + "\n"


# -- peers and messages -------------------------------------------------------


class PeerRole(str, Enum):
    EDGE = "Edge"
    RENDEZVOUS = "Rendezvous"


@dataclass(frozen=True)
class PeerId:
    name: str
    role: PeerRole

    def __str__(self) -> str:
        return self.name


class Message:
    """Base for simulator payloads; ``kind`` names the trace column."""

    @property
    def kind(self) -> str:
        return type(self).__name__

    def detail(self) -> str:
        return ""


@dataclass(frozen=True)
class Advertise(Message):
    catalog: Tuple[Tuple[Quantity, int], ...]

    def detail(self) -> str:
        return "catalog=" + ",".join(f"{q.value}:v{v}" for q, v in self.catalog)


@dataclass(frozen=True)
class Discover(Message):
    quantity: Quantity
    req: str

    def detail(self) -> str:
        return f"q={self.quantity.value} req={self.req}"


@dataclass(frozen=True)
class DiscoverReply(Message):
    quantity: Quantity
    req: str
    oa: Optional[str]
    has: bool

    def detail(self) -> str:
        return f"q={self.quantity.value} req={self.req} has={'yes' if self.has else 'no'} oa={self.oa or '-'}"


@dataclass(frozen=True)
class FetchFragment(Message):
    quantity: Quantity
    req: str

    def detail(self) -> str:
        return f"q={self.quantity.value} req={self.req}"


@dataclass(frozen=True)
class FragmentReply(Message):
    quantity: Quantity
    req: str
    fragment: Any = None  # OntologyFragment, or None when unavailable
    oa: Optional[str] = None

    @property
    def has(self) -> bool:
        return self.fragment is not None

    def detail(self) -> str:
        if self.fragment is None:
            return f"q={self.quantity.value} req={self.req} missing"
        return f"q={self.quantity.value} req={self.req} fragment={self.fragment.id} v{self.fragment.version} triples={len(self.fragment.triples)}"


@dataclass(frozen=True)
class Forwarded(Message):
    inner: Message
    hops: int

    def detail(self) -> str:
        return f"hops={self.hops} inner={self.inner.kind} {self.inner.detail()}"


@dataclass(frozen=True)
class RawData(Message):
    body: bytes
    wire_format: str
    corr: str

    def detail(self) -> str:
        return f"corr={self.corr} format={self.wire_format} bytes={len(self.body)}"


@dataclass(frozen=True)
class AnnotatedData(Message):
    body: bytes
    corr: str

    def detail(self) -> str:
        lines = self.body.count(b"\n")
        return f"corr={self.corr} triples={lines}"


@dataclass(frozen=True)
class Ack(Message):
    code: int
    corr: str

    def detail(self) -> str:
        return f"code={self.code} corr={self.corr}"


@dataclass(frozen=True)
class Notify(Message):
    notification: Any

    def detail(self) -> str:
        n = self.notification
        return f"event={n.event_iri} situation={n.situation}"


@dataclass(frozen=True)
class QueryRequest(Message):
    text: str

    def detail(self) -> str:
        return self.text.replace("\n", " ")[:120]


@dataclass(frozen=True)
class QueryResponse(Message):
    code: int
    payload: str

    def detail(self) -> str:
        return f"code={self.code} payload={self.payload.strip().replace(chr(10), ' | ')[:160]}"


@dataclass(frozen=True)
class Local(Message):
    """A timer or task completion delivered to the peer that scheduled it."""

    task: str
    corr: str = ""
    span_us: int = 0
    data: Any = None

    @property
    def kind(self) -> str:
        return self.task

    def detail(self) -> str:
        parts = []
        if self.corr:
            parts.append(f"corr={self.corr}")
        if self.span_us:
            parts.append(f"span={us_to_ms(self.span_us):.3f}")
        return " ".join(parts)


OVERLAY_KINDS = frozenset({"Advertise", "Discover", "DiscoverReply", "FetchFragment", "FragmentReply", "Forwarded"})


# -- events and trace ---------------------------------------------------------


@dataclass(frozen=True)
class SimEvent:
    deliver_at: int  # µs
    seq: int
    src: str
    dst: str
    payload: Message
    sent_at: int  # µs
    cause: int = -1  # seq of the event whose handler sent this one

    @property
    def deliver_at_ms(self) -> float:
        return us_to_ms(self.deliver_at)


@dataclass(frozen=True)
class TraceRecord:
    time: int
    seq: int
    src: str
    dst: str
    kind: str
    detail: str
    sent_at: int
    payload: Message = field(compare=False, repr=False)
    cause: int = -1

    @property
    def time_ms(self) -> float:
        return us_to_ms(self.time)

    @property
    def sent_at_ms(self) -> float:
        return us_to_ms(self.sent_at)

    def line(self) -> str:
        return f"{self.time_ms:.3f}\t{self.src}\t{self.dst}\t{self.kind}\t{self.detail}"


class EventTrace(list):
    """Ordered list of executed events."""

    def dump(self) -> str:
        return "".join(r.line() + "\n" for r in self)

    def kinds(self, messages_only: bool = False) -> List[str]:
        return [r.kind for r in self if not (messages_only and isinstance(r.payload, Local))]

    def of_kind(self, *kinds: str) -> List[TraceRecord]:
        return [r for r in self if r.kind in kinds]


@dataclass(frozen=True)
class Outcome:
    """Something that happened without a message: a drop, an error, a sample note."""

    time: int
    peer: str
    kind: str
    detail: str


class Simulator:
    def __init__(self, horizon_ms: Optional[float] = None, max_events: int = 5_000_000):
        self.now = 0
        self.horizon = None if horizon_ms is None else ms_to_us(horizon_ms)
        self.max_events = max_events
        self._queue: List[Tuple[int, int, SimEvent]] = []
        self._seq = itertools.count()
        self._handlers: Dict[str, Callable[[SimEvent], None]] = {}
        self.trace = EventTrace()
        self.outcomes: List[Outcome] = []
        self._current = -1

    def register(self, name: str, handler: Callable[[SimEvent], None]) -> None:
        self._handlers[name] = handler

    def next_seq(self) -> int:
        return next(self._seq)

    def schedule(self, event: SimEvent) -> None:
        if event.deliver_at < self.now:
            raise TimeTravel(f"event at {us_to_ms(event.deliver_at)} ms scheduled at now={us_to_ms(self.now)} ms")
        heapq.heappush(self._queue, (event.deliver_at, event.seq, event))

    def send(self, src: str, dst: str, payload: Message, delay_us: int, at: Optional[int] = None) -> SimEvent:
        sent = self.now if at is None else at
        event = SimEvent(sent + delay_us, self.next_seq(), src, dst, payload, sent, self._current)
        self.schedule(event)
        return event

    def timer(self, peer: str, task: Local, at: int) -> SimEvent:
        return self.send(peer, peer, task, at - self.now, at=self.now)

    def pending(self) -> List[SimEvent]:
        return [e for _, _, e in sorted(self._queue)]

    def has_pending(self, ignore: Callable[[SimEvent], bool] = lambda e: False) -> bool:
        return any(not ignore(e) for _, _, e in self._queue)

    def note(self, peer: str, kind: str, detail: str = "") -> None:
        self.outcomes.append(Outcome(self.now, peer, kind, detail))

    def step(self) -> Optional[TraceRecord]:
        if not self._queue:
            return None
        at, _, event = self._queue[0]
        if self.horizon is not None and at > self.horizon:
            raise HorizonExceeded(f"next event at {us_to_ms(at)} ms is past the horizon")
        heapq.heappop(self._queue)
        self.now = at
        p = event.payload
        record = TraceRecord(at, event.seq, event.src, event.dst, p.kind, p.detail(), event.sent_at, p, event.cause)
        self.trace.append(record)
        handler = self._handlers.get(event.dst)
        if handler is not None:
            self._current = event.seq
            try:
                handler(event)
            finally:
                self._current = -1
        return record

    def run_until_idle(self) -> EventTrace:
        """Process events until the queue drains; returns the full trace."""
        start = len(self.trace)
        while self._queue:
            if len(self.trace) - start >= self.max_events:
                raise HorizonExceeded(f"more than {self.max_events} events")
            self.step()
        return self.trace


def schedule(sim: Simulator, event: SimEvent) -> None:
    sim.schedule(event)


def run_until_idle(sim: Simulator) -> EventTrace:
    return sim.run_until_idle()


# -- topology and latency -----------------------------------------------------


class EndpointKind(str, Enum):
    SENSOR = "sensor"
    AA = "aa"
    OA = "oa"
    SA = "sa"
    APP = "app"
    USER = "user"


@dataclass(frozen=True)
class Endpoint:
    name: str
    kind: EndpointKind
    host: str = ""
    host_class: Optional[NodeClass] = None


def _radio_hop(profile: CostProfile, node_class: Optional[NodeClass]) -> int:
    if node_class is NodeClass.TYPE_A:
        return profile.us("link_sensor_aa_ms")
    if node_class is NodeClass.TYPE_B:
        return profile.us("link_typeb_uplink_ms")
    return 0


class Topology:
    """Endpoints plus the one-way latency between any two of them.

    Links are symmetric.  A sensor reaches an AA on another node over its
    radio hop (Type A: ``link_sensor_aa``, Type B: ``link_typeb_uplink``);
    a colocated AA is reached at no cost.  Traffic from an AA hosted on a
    Type B node to the SA first crosses that node's radio hop.
    """

    def __init__(self, profile: CostProfile, settings: Optional[OverlaySettings] = None):
        self.profile = profile
        self.settings = settings or OverlaySettings()
        self.endpoints: Dict[str, Endpoint] = {}
        self._rng = random.Random(self.settings.seed)

    def add(self, endpoint: Endpoint) -> Endpoint:
        if endpoint.name in self.endpoints:
            raise ConfigInvalid(f"duplicate endpoint {endpoint.name}")
        self.endpoints[endpoint.name] = endpoint
        return endpoint

    def __getitem__(self, name: str) -> Endpoint:
        return self.endpoints[name]

    def base_latency(self, src: str, dst: str) -> int:
        a, b = self.endpoints[src], self.endpoints[dst]
        if a.name == b.name:
            return 0
        p = self.profile
        kinds = {a.kind, b.kind}
        K = EndpointKind
        if kinds == {K.SENSOR, K.AA}:
            sensor = a if a.kind is K.SENSOR else b
            aa = b if sensor is a else a
            return 0 if sensor.host == aa.host else _radio_hop(p, sensor.host_class)
        if kinds == {K.AA, K.OA}:
            return p.us("link_aa_oa_ms")
        if kinds == {K.OA}:
            return p.us("link_oa_oa_ms")
        if kinds == {K.AA, K.SA}:
            aa = a if a.kind is K.AA else b
            hop = p.us("link_typeb_uplink_ms") if aa.host_class is NodeClass.TYPE_B else 0
            return hop + p.us("link_aa_sa_ms")
        if kinds == {K.SA, K.APP}:
            return p.us("link_sa_app_ms")
        if kinds == {K.SENSOR, K.APP}:
            sensor = a if a.kind is K.SENSOR else b
            return _radio_hop(p, sensor.host_class) + p.us("link_sa_app_ms")
        if kinds == {K.APP, K.USER}:
            return p.us("link_app_user_ms")
        raise ConfigInvalid(f"no link between {a.kind.value} {a.name} and {b.kind.value} {b.name}")

    def latency(self, src: str, dst: str) -> int:
        base = self.base_latency(src, dst)
        eps = self.settings.jitter_ms
        if eps <= 0 or base == 0:
            return base
        return max(0, base + ms_to_us(self._rng.uniform(-eps, eps)))


# -- measurement helpers ------------------------------------------------------


@dataclass(frozen=True)
class DiscoveryOutcome:
    aa: str
    quantity: Quantity
    req: str
    oa: Optional[str]
    has: bool
    started: int
    finished: int

    @property
    def elapsed_ms(self) -> float:
        return us_to_ms(self.finished - self.started)


@dataclass(frozen=True)
class FetchOutcome:
    aa: str
    quantity: Quantity
    req: str
    oa: str
    fragment: Any
    started: int
    finished: int

    @property
    def elapsed_ms(self) -> float:
        return us_to_ms(self.finished - self.started)


def request_spans(trace: Sequence[TraceRecord], request_kind: str, reply_kind: str, peer: Optional[str] = None) -> Dict[str, Tuple[int, int]]:
    """Map request id -> (sent_at of the request, arrival of the reply at its sender).

    Only the edge-side legs count: requests sent by ``peer`` (or any AA when
    ``peer`` is None) and replies delivered back to that sender.
    """
    starts: Dict[str, Tuple[int, str]] = {}
    spans: Dict[str, Tuple[int, int]] = {}
    for r in trace:
        p = r.payload
        if r.kind == request_kind and getattr(p, "req", None) and (peer is None or r.src == peer):
            if p.req.split("#")[0] == r.src and p.req not in starts:
                starts[p.req] = (r.sent_at, r.src)
        elif r.kind == reply_kind and getattr(p, "req", None) in starts:
            start, origin = starts[p.req]
            if r.dst == origin and p.req not in spans:
                spans[p.req] = (start, r.time)
    return spans
