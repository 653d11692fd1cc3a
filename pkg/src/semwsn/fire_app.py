"""Fire-monitoring semantic application.

Annotated observations go into the knowledge store.  Every write regroups
co-located hot observations into fire events, recomputes the rule closure,
and queues a notification for each new fire situation.  The same service
answers status queries, notification polls and SELECT queries, either
in-process or over a small line protocol on a TCP socket.
"""

from __future__ import annotations

import logging
import math
import socketserver
import threading
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
from urllib.parse import quote

from .errors import FormatError, NotFound, SemWSNError
from .formats import parse_ntriples, parse_raw, serialize_ntriples
from .model import Quantity
from .ontology import build_base_ontology, full_fragment, output_class
from .query import execute, parse_query, rows_to_csv
from .reasoner import RuleSet, apply_rules, parse_rules
from .store import TripleStore
from .terms import FDA, IRI, XSD_DOUBLE, XSD_LONG, Literal, Triple, q

log = logging.getLogger(__name__)

# Rule2 as published spells its consequent "fda: fireBlaze"
RULE_ALIASES = {FDA + "fireBlaze": FDA + "FireBlaze"}


class Situation(str, Enum):
    INITIAL_FIRE = "InitialFire"
    FIRE_BLAZE = "FireBlaze"

    @property
    def iri(self) -> IRI:
        return IRI(FDA + self.value)

    @property
    def severity(self) -> int:
        return 2 if self is Situation.FIRE_BLAZE else 1


_SITUATIONS = {s.iri: s for s in Situation}


@dataclass(frozen=True)
class Notification:
    event_iri: IRI
    situation: Situation
    time_ms: int
    longitude: float
    latitude: float

    def line(self) -> str:
        return f"{self.time_ms}\t{self.event_iri.value}\t{self.situation.value}\t{self.longitude!r}\t{self.latitude!r}"


@dataclass(frozen=True)
class Thresholds:
    high_temperature_c: float = 80.0  # fixed by Rule1; listed for reference only
    low_humidity_pct: float = 25.0
    high_humidity_pct: float = 75.0
    high_co2_ppm: float = 1000.0

    def rules_text(self) -> str:
        def level(name, quantity, unit, builtin, limit, prop, value):
            return (
                f"[{name}: (?o rdf:type base:{quantity}Output) (?o ssn:hasValue ?v) "
                f"(?o base:hasUnit base:{unit}) {builtin}(?v, {limit!r}) -> (?o fda:{prop} fda:{value})]\n"
            )

        return (
            level("LowHumidity", "Humidity", "PercentRH", "lessThan", self.low_humidity_pct, "hasHumidityLevel", "LowHumidity")
            + level("HighHumidity", "Humidity", "PercentRH", "greaterThan", self.high_humidity_pct, "hasHumidityLevel", "HighHumidity")
            + level("HighCO2", "CO2", "PPM", "greaterThan", self.high_co2_ppm, "hasCO2Level", "HighCO2")
            + level("LowCO2", "CO2", "PPM", "le", self.high_co2_ppm, "hasCO2Level", "LowCO2")
        )


@dataclass(frozen=True)
class BoundingBox:
    location: str  # local name in the fda namespace
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def contains(self, lon: float, lat: float) -> bool:
        return self.min_lon <= lon <= self.max_lon and self.min_lat <= lat <= self.max_lat


# first match wins, so the narrow boxes come first
DEFAULT_LOCATIONS: Tuple[BoundingBox, ...] = (
    BoundingBox("Downtown", -73.59, 45.49, -73.55, 45.52),
    BoundingBox("Park", -73.61, 45.50, -73.58, 45.52),
    BoundingBox("City", -74.00, 45.30, -73.40, 45.80),
)


@dataclass(frozen=True)
class GroupingSettings:
    radius_m: float = 500.0
    window_ms: int = 600_000


def haversine_m(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    r = 6_371_000.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp, dl = p2 - p1, math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(min(1.0, math.sqrt(a)))


def default_rules(thresholds: Thresholds = Thresholds()) -> RuleSet:
    text = resources.files("semwsn").joinpath("data/fire.rules").read_text(encoding="utf-8")
    return parse_rules(text + "\n" + thresholds.rules_text(), aliases=RULE_ALIASES)


def default_domain() -> List[Triple]:
    return parse_ntriples(resources.files("semwsn").joinpath("data/fire-domain.nt").read_bytes())


# -- co-location grouping -----------------------------------------------------


@dataclass
class _Obs:
    iri: IRI
    time_ms: int
    lon: float
    lat: float
    sensor: IRI
    values: List[Literal]
    hot: bool


def _number(store: TripleStore, s: IRI, p: IRI) -> Optional[float]:
    for o in sorted(store.objects(s, p), key=str):
        if isinstance(o, Literal) and o.numeric() is not None:
            return float(o.numeric())
    return None


def _observations(store: TripleStore, hot: Iterable[IRI]) -> List[_Obs]:
    hot = set(hot)
    interesting = [output_class(qq) for qq in (Quantity.TEMPERATURE, Quantity.HUMIDITY, Quantity.CO2)]
    out = []
    for cls in interesting:
        for obs in store.subjects(q("rdf:type"), cls):
            if not isinstance(obs, IRI):
                continue
            t = _number(store, obs, q("base:hasSensingTime"))
            sensors = sorted(store.objects(obs, q("base:isObservationOf")), key=str)
            if t is None or not sensors:
                continue
            sensor = sensors[0]
            lon = _number(store, sensor, q("base:hasLongitude"))
            lat = _number(store, sensor, q("base:hasLatitude"))
            if lon is None or lat is None:
                continue
            values = []
            if cls == output_class(Quantity.TEMPERATURE):
                values = sorted((v for v in store.objects(obs, q("ssn:hasValue")) if isinstance(v, Literal)), key=str)
            out.append(_Obs(obs, int(t), lon, lat, sensor, values, obs in hot))
    out.sort(key=lambda o: (o.time_ms, o.iri.value))
    return out


def event_iri(source_sensor: IRI, time_ms: int) -> IRI:
    local = source_sensor.value.rsplit("/", 1)[-1]
    return IRI(f"{FDA}event/{quote(local, safe='-._~%')}/{time_ms}")


def group_events(store: TripleStore, hot: Iterable[IRI], settings: GroupingSettings = GroupingSettings(),
                 locations: Sequence[BoundingBox] = DEFAULT_LOCATIONS) -> List[Triple]:
    """Fire-event triples for a store whose hot observations are ``hot``.

    Hot observations (in time order) open a new event unless one is already
    open within ``radius_m`` and ``window_ms`` of it; every other
    temperature, humidity or CO2 observation joins the earliest open event
    in range.
    """
    observations = _observations(store, hot)
    events: List[Tuple[_Obs, IRI, List[_Obs]]] = []

    def find(o: _Obs) -> Optional[int]:
        for i, (anchor, _, _) in enumerate(events):
            if abs(o.time_ms - anchor.time_ms) <= settings.window_ms and \
                    haversine_m(o.lon, o.lat, anchor.lon, anchor.lat) <= settings.radius_m:
                return i
        return None

    for o in observations:
        if o.hot:
            i = find(o)
            if i is None:
                events.append((o, event_iri(o.sensor, o.time_ms), [o]))
            else:
                events[i][2].append(o)
    for o in observations:
        if not o.hot:
            i = find(o)
            if i is not None:
                events[i][2].append(o)

    triples = []
    for anchor, ev, members in events:
        triples += [
            Triple(ev, q("rdf:type"), q("fda:FireEvent")),
            Triple(ev, q("base:hasSensingTime"), Literal(str(anchor.time_ms), XSD_LONG)),
            Triple(ev, q("base:hasLongitude"), Literal(repr(anchor.lon), XSD_DOUBLE)),
            Triple(ev, q("base:hasLatitude"), Literal(repr(anchor.lat), XSD_DOUBLE)),
            Triple(ev, q("base:isObservationOf"), anchor.sensor),
        ]
        for box in locations:
            if box.contains(anchor.lon, anchor.lat):
                triples.append(Triple(ev, q("fda:hasLocation"), IRI(FDA + box.location)))
                break
        for m in members:
            triples.append(Triple(m.iri, q("fda:partOfEvent"), ev))
            triples += [Triple(ev, q("ssn:hasValue"), v) for v in m.values]
    return triples


# -- knowledge store ----------------------------------------------------------


class KnowledgeStore:
    """Asserted facts plus their rule closure, swapped atomically on write."""

    def __init__(self, rules: RuleSet, grouping: GroupingSettings = GroupingSettings(),
                 locations: Sequence[BoundingBox] = DEFAULT_LOCATIONS):
        self.rules = rules
        self.grouping = grouping
        self.locations = tuple(locations)
        self.asserted = TripleStore()
        self.inferred = TripleStore()
        self.last_closure_round = 0
        self.lock = threading.RLock()

    def closure_of(self, asserted: TripleStore) -> Tuple[TripleStore, int]:
        # no events exist yet, so this pass only classifies observations
        stage = apply_rules(asserted, self.rules)
        hot = stage.closure.subjects(q("fda:hasTemperatureType"), q("fda:HighTemperature"))
        grouped = asserted.union(group_events(stage.closure, hot, self.grouping, self.locations))
        result = apply_rules(grouped, self.rules)
        inferred = TripleStore(t for t in result.closure if t not in asserted)
        return inferred, result.rounds

    def write(self, triples: Sequence[Triple]) -> Tuple[TripleStore, TripleStore]:
        """Insert ``triples``; returns the (old, new) inferred stores."""
        with self.lock:
            candidate = self.asserted.union(triples)
            inferred, rounds = self.closure_of(candidate)
            old = self.inferred
            self.asserted, self.inferred, self.last_closure_round = candidate, inferred, rounds
            return old, inferred

    def snapshot(self) -> TripleStore:
        with self.lock:
            asserted, inferred = self.asserted, self.inferred
        return asserted.union(inferred)


# -- application --------------------------------------------------------------


class FireApp:
    def __init__(self, thresholds: Thresholds = Thresholds(), grouping: GroupingSettings = GroupingSettings(),
                 locations: Sequence[BoundingBox] = DEFAULT_LOCATIONS, rules: Optional[RuleSet] = None,
                 domain: Optional[Iterable[Triple]] = None):
        self.thresholds = thresholds
        rules = rules if rules is not None else default_rules(thresholds)
        self.store = KnowledgeStore(rules, grouping, locations)
        self.fragment = full_fragment(build_base_ontology())
        self.notification_log: List[Notification] = []
        self._announced: set = set()
        self.store.write(list(domain if domain is not None else default_domain()))

    # ingest
    def ingest(self, body: bytes) -> int:
        try:
            triples = parse_ntriples(body)
        except FormatError as exc:
            log.info("rejected ingest: %s", exc)
            return 400
        return self.ingest_triples(triples)

    def ingest_triples(self, triples: Sequence[Triple]) -> int:
        with self.store.lock:
            old, new = self.store.write(triples)
            self._announce(old, new)
        return 200

    def ingest_raw(self, body: bytes, wire_format: str) -> int:
        """Annotate a raw payload in the application, then ingest it."""
        from .agents import annotate

        try:
            readings = parse_raw(body, wire_format)
            triples = [t for r in readings for t in annotate(r, self.fragment).triples]
        except SemWSNError as exc:
            log.info("rejected raw ingest: %s", exc)
            return 400
        return self.ingest_triples(triples)

    def _announce(self, old: TripleStore, new: TripleStore) -> None:
        snapshot = self.store.asserted.union(new)
        fresh = []
        for t in new.match((None, q("fda:hasFireSituation"), None)):
            situation = _SITUATIONS.get(t.object)
            if situation is None or (t.subject, situation) in self._announced:
                continue
            self._announced.add((t.subject, situation))
            time_ms = _number(snapshot, t.subject, q("base:hasSensingTime"))
            lon = _number(snapshot, t.subject, q("base:hasLongitude"))
            lat = _number(snapshot, t.subject, q("base:hasLatitude"))
            fresh.append(Notification(t.subject, situation, int(time_ms or 0), lon or 0.0, lat or 0.0))
        fresh.sort(key=lambda n: (n.time_ms, n.situation.severity, n.event_iri.value))
        self.notification_log.extend(fresh)

    # reads
    def notifications(self, since_ms: int = 0) -> List[Notification]:
        with self.store.lock:
            log_copy = list(self.notification_log)
        return sorted((n for n in log_copy if n.time_ms >= since_ms),
                      key=lambda n: (n.time_ms, n.situation.severity, n.event_iri.value))

    def status(self, iri: IRI) -> str:
        snap = self.store.snapshot()
        if not snap.match((iri, None, None)):
            raise NotFound(iri.value)
        found = [_SITUATIONS[o] for o in snap.objects(iri, q("fda:hasFireSituation")) if o in _SITUATIONS]
        if not found:
            return "None"
        return max(found, key=lambda s: s.severity).value

    def query(self, text: str) -> str:
        parsed = parse_query(text)
        return rows_to_csv(parsed, execute(parsed, self.store.snapshot()))

    def dump(self) -> bytes:
        return serialize_ntriples(self.store.snapshot().sorted())

    def request(self, text: str) -> Tuple[int, str]:
        """One text request as used by the simulator and the socket binding."""
        head = text.strip()
        try:
            if head.upper().startswith("STATUS "):
                iri = head[7:].strip()
                if iri.startswith("<") and iri.endswith(">"):
                    iri = iri[1:-1]
                return 200, self.status(IRI(iri))
            if head.upper().startswith("NOTIFY"):
                since = int(head[6:].strip() or 0)
                return 200, "".join(n.line() + "\n" for n in self.notifications(since))
            return 200, self.query(text)
        except NotFound as exc:
            return 404, f"not found: {exc.args[0]}"
        except (SemWSNError, ValueError) as exc:
            return 400, str(exc)


# -- socket binding -----------------------------------------------------------


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        app: FireApp = self.server.app
        while True:
            line = self.rfile.readline()
            if not line:
                return
            command = line.decode("utf-8", "replace").strip()
            if not command:
                continue
            try:
                if command in ("POST ingest", "QUERY"):
                    length = int(self.rfile.readline().strip())
                    body = self.rfile.read(length)
                    if command == "POST ingest":
                        code = app.ingest(body)
                        payload = "ok" if code == 200 else "rejected"
                    else:
                        code, payload = app.request(body.decode("utf-8"))
                elif command.startswith(("NOTIFY", "STATUS ")):
                    code, payload = app.request(command)
                else:
                    code, payload = 400, f"unknown command {command!r}"
            except ValueError:
                code, payload = 400, "bad length"
            data = payload.encode("utf-8")
            self.wfile.write(f"OK {code}\n{len(data)}\n".encode("ascii") + data)
            self.wfile.flush()


class FireAppServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, app: FireApp, address: Tuple[str, int] = ("127.0.0.1", 0)):
        super().__init__(address, _Handler)
        self.app = app


def socket_request(address: Tuple[str, int], command: str, body: Optional[bytes] = None) -> Tuple[int, str]:
    """Client side of the line protocol; returns (code, payload)."""
    import socket

    with socket.create_connection(address, timeout=10) as sock:
        msg = command.encode("utf-8") + b"\n"
        if body is not None:
            msg += f"{len(body)}\n".encode("ascii") + body
        sock.sendall(msg)
        f = sock.makefile("rb")
        status = f.readline().decode("ascii").split()
        length = int(f.readline())
        payload = f.read(length).decode("utf-8")
    return int(status[1]), payload
