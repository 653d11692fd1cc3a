"""End-to-end experiments: Configurations A/B/C, scalability sweep, illustrative run.

Every run builds a fresh network, scripts the readings, drives the
simulator to idle and then reads the metrics back out of the trace.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import random
import statistics
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .agents import DeploymentOptions, Network, build_network
from .errors import ConfigInvalid, GoldenMismatch, SemWSNError
from .fire_app import FireApp
from .model import (
    Deployment,
    NodeClass,
    Quantity,
    RawReading,
    SensorKind,
    SensorNode,
    VirtualSensor,
    wire_format_for,
)
from .overlay import (
    CostProfile,
    DiscoveryMode,
    EventTrace,
    Local,
    OverlaySettings,
    TraceRecord,
    load_profile,
    ms_to_us,
    request_spans,
    us_to_ms,
)

EPOCH_BASE_MS = 1_400_000_000_000
REPEAT_INTERVAL_MS = 10_000
CSV_HEADER = ["metric", "config", "n", "mean_ms", "ci95_ms"]


def data_path(*parts: str):
    return resources.files("semwsn").joinpath("/".join(("data",) + parts))


# -- profiles and deployment files -------------------------------------------


def resolve_profile(spec: Union[str, Path, None]) -> Tuple[CostProfile, OverlaySettings]:
    """``None`` or ``"paper"`` selects the shipped calibrated profile."""
    if spec is None or str(spec) == "paper":
        with resources.as_file(data_path("profiles", "paper.cfg")) as p:
            return load_profile(p)
    return load_profile(spec)


@dataclass
class DeploymentFile:
    deployment: Deployment
    rendezvous: Dict[str, List[str]] = field(default_factory=dict)
    oa_links: Optional[Dict[str, List[str]]] = None
    discovery_mode: Optional[DiscoveryMode] = None


def _mapping(text: str) -> Dict[str, List[str]]:
    out: Dict[str, List[str]] = {}
    for line in text.strip().splitlines():
        if not line.strip():
            continue
        key, sep, values = line.partition(":")
        if not sep:
            raise ConfigInvalid(f"expected 'name: a, b' in {line!r}")
        out[key.strip()] = [v.strip() for v in values.split(",") if v.strip()]
    return out


def parse_deployment(text: str, source: str = "<deployment>") -> DeploymentFile:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigInvalid(f"{source}: {exc}") from None
    nodes, sensors = [], []
    rendezvous, links, mode = {}, None, None
    try:
        for name in parser.sections():
            sec = parser[name]
            kind, _, ident = name.partition(" ")
            if kind == "node":
                caps = frozenset(Quantity.parse(c.strip()) for c in sec.get("capabilities", "").split(",") if c.strip())
                nodes.append(SensorNode(ident.strip(), NodeClass.parse(sec["class"]), caps,
                                        sec.getfloat("longitude"), sec.getfloat("latitude")))
            elif kind == "sensor":
                sensors.append((ident.strip(), sec))
            elif name == "overlay":
                if "rendezvous" in sec:
                    rendezvous = _mapping(sec["rendezvous"])
                if "oa_links" in sec:
                    links = _mapping(sec["oa_links"])
                if "discovery_mode" in sec:
                    mode = DiscoveryMode(sec["discovery_mode"].strip().lower())
            else:
                raise ConfigInvalid(f"{source}: unknown section [{name}]")
        by_id = {n.id: n for n in nodes}
        built = []
        for ident, sec in sensors:
            host = by_id.get(sec.get("host", ""))
            if host is None:
                raise ConfigInvalid(f"{source}: sensor {ident} names unknown host {sec.get('host')!r}")
            built.append(VirtualSensor(
                ident, host.id, Quantity.parse(sec["quantity"]),
                SensorKind(sec.get("kind", "Semantic")), sec.getint("period_ms", 1000),
                wire_format_for(host.node_class),
            ))
        deployment = Deployment(nodes, built)
        deployment.validate()
    except (KeyError, ValueError) as exc:
        if isinstance(exc, SemWSNError):
            raise ConfigInvalid(f"{source}: {exc}") from None
        raise ConfigInvalid(f"{source}: {exc!r}") from None
    return DeploymentFile(deployment, rendezvous, links, mode)


def load_deployment(path: Union[str, Path, None] = None) -> DeploymentFile:
    if path is None:
        return parse_deployment(data_path("deployments", "default.cfg").read_text(encoding="utf-8"), "default.cfg")
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid(f"deployment {path} not found")
    return parse_deployment(path.read_text(encoding="utf-8"), str(path))


# -- metrics ------------------------------------------------------------------


@dataclass(frozen=True)
class MetricSummary:
    metric: str
    config: str
    n: int
    mean_ms: float
    ci95_ms: float
    samples: Tuple[float, ...] = field(default=(), compare=False, repr=False)


def summarize(metric: str, config: str, samples: Sequence[float]) -> MetricSummary:
    samples = tuple(samples)
    if not samples:
        raise ValueError(f"no samples for {metric}")
    n = len(samples)
    mean = math.fsum(samples) / n
    ci = 0.0
    if n > 1 and len(set(samples)) > 1:
        ci = 1.96 * statistics.stdev(samples) / math.sqrt(n)
    return MetricSummary(metric, config, n, mean, ci, samples)


def summaries_csv(summaries: Sequence[MetricSummary]) -> str:
    if not summaries:
        raise ValueError("nothing to write")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in summaries:
        w.writerow([s.metric, s.config, s.n, repr(s.mean_ms), repr(s.ci95_ms)])
    return buf.getvalue()


def write_csv(summaries: Sequence[MetricSummary], path: Union[str, Path]) -> None:
    Path(path).write_text(summaries_csv(summaries), encoding="utf-8")


def read_csv(path: Union[str, Path]) -> List[MetricSummary]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != CSV_HEADER:
        raise ConfigInvalid(f"{path}: unexpected header")
    return [MetricSummary(m, c, int(n), float(mean), float(ci)) for m, c, n, mean, ci in rows[1:]]


# -- trace analysis -----------------------------------------------------------


def e2ed_samples(trace: Sequence[TraceRecord], sensors: Sequence[str]) -> Dict[str, float]:
    """corr -> ms from the raw send to the 200 ack reaching that sensor."""
    sensors = set(sensors)
    sent: Dict[str, int] = {}
    out: Dict[str, float] = {}
    for r in trace:
        p = r.payload
        if r.kind == "RawData" and r.src in sensors and p.corr not in sent:
            sent[p.corr] = r.sent_at
        elif r.kind == "Ack" and r.dst in sensors and p.code == 200 and p.corr in sent and p.corr not in out:
            out[p.corr] = us_to_ms(r.time - sent[p.corr])
    return out


def annotation_spans(trace: Sequence[TraceRecord]) -> List[float]:
    return [us_to_ms(r.time - r.sent_at) for r in trace if r.kind == "annotate"]


def causal_chain(trace: Sequence[TraceRecord], last: TraceRecord) -> List[TraceRecord]:
    """Records leading to ``last``, oldest first, following each one's cause."""
    by_seq = {r.seq: r for r in trace}
    chain = [last]
    while chain[-1].cause >= 0:
        chain.append(by_seq[chain[-1].cause])
    return chain[::-1]


@dataclass(frozen=True)
class Stage:
    label: str
    start: int
    end: int

    @property
    def ms(self) -> float:
        return us_to_ms(self.end - self.start)


def stage_breakdown(trace: Sequence[TraceRecord], corr: str, sensor: str) -> List[Stage]:
    """Split one sample's E2ED into contiguous stages.

    Transit stages come from message records (send to delivery); the gap
    between delivery and the next send is the receiver's processing or
    queueing time.  Timer records cover local work such as annotation.
    """
    last = next(r for r in trace if r.kind == "Ack" and r.dst == sensor and r.payload.corr == corr)
    chain = causal_chain(trace, last)
    stages: List[Stage] = []
    prev_end: Optional[int] = None
    for r in chain:
        if prev_end is not None and r.sent_at > prev_end:
            stages.append(Stage(f"wait@{r.src}", prev_end, r.sent_at))
        label = f"{r.kind}@{r.src}" if isinstance(r.payload, Local) else f"{r.kind}:{r.src}->{r.dst}"
        stages.append(Stage(label, r.sent_at, r.time))
        prev_end = r.time
    return stages


# -- configurations -----------------------------------------------------------


class Configuration(str, Enum):
    A = "A"  # Type A sensors, annotation on the GTO with fragments fetched from an OA
    B = "B"  # Type B sensors annotate with locally stored fragments
    C = "C"  # raw data straight to the application, which annotates it

    @classmethod
    def parse(cls, text: str) -> "Configuration":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ConfigInvalid(f"unknown configuration {text!r}") from None


class SpikeInjector:
    """Occasional extra application latency (cold starts); off unless enabled."""

    def __init__(self, probability: float, extra_ms: float, seed: int = 0):
        if not 0 <= probability <= 1 or extra_ms < 0:
            raise ConfigInvalid("spike probability must be in [0, 1] and extra_ms >= 0")
        self.probability = probability
        self.extra_us = ms_to_us(extra_ms)
        self._rng = random.Random(seed)

    def __call__(self) -> int:
        return self.extra_us if self._rng.random() < self.probability else 0


@dataclass
class RunResult:
    config: Configuration
    summaries: Dict[str, MetricSummary]
    e2ed: List[float]
    trace: EventTrace
    network: Network
    corrs: List[Tuple[str, str]]  # (sensor, corr) per repeat


def _senders(dep: Deployment, config: Configuration) -> List[VirtualSensor]:
    nodes = {n.id: n for n in dep.nodes}
    temps = [vs for vs in dep.sensors if vs.kind is SensorKind.SEMANTIC and vs.quantity is Quantity.TEMPERATURE]
    by_class = {c: [vs for vs in temps if nodes[vs.host].node_class is c] for c in NodeClass}
    if config is Configuration.A:
        chosen = by_class[NodeClass.TYPE_A]
    elif config is Configuration.B:
        chosen = by_class[NodeClass.TYPE_B]
    else:
        # alternate constrained and capable motes
        a, b = by_class[NodeClass.TYPE_A], by_class[NodeClass.TYPE_B]
        if not a or not b:
            raise ConfigInvalid("configuration C needs temperature sensors on Type A and Type B nodes")
        return [a[0], b[0]]
    if not chosen:
        raise ConfigInvalid(f"configuration {config.value} needs a temperature sensor on a suitable node")
    return chosen[:1]


def reading_value(k: int) -> float:
    return 20.0 + (k % 10)


def run_configuration(config: Union[Configuration, str], profile: Optional[CostProfile] = None,
                      repeats: int = 50, deployment: Optional[DeploymentFile] = None,
                      settings: Optional[OverlaySettings] = None, spike: Optional[SpikeInjector] = None,
                      repeat_interval_ms: int = REPEAT_INTERVAL_MS) -> RunResult:
    config = Configuration.parse(config) if isinstance(config, str) else config
    if repeats < 1:
        raise ConfigInvalid("repeats must be >= 1")
    if profile is None:
        profile, default_settings = resolve_profile("paper")
        settings = settings or default_settings
    settings = settings or OverlaySettings()
    if config is not Configuration.A and settings.discovery_mode is DiscoveryMode.PROACTIVE:
        settings = OverlaySettings(DiscoveryMode.REACTIVE, settings.max_hops, settings.seed, settings.jitter_ms)
    dep = deployment or load_deployment()
    options = DeploymentOptions(
        local_ontology=config is Configuration.B,
        direct_to_app=config is Configuration.C,
        rendezvous=dep.rendezvous,
        oa_adjacency=dep.oa_links,
    )
    net, _ = build_network(dep.deployment, profile, settings, options, app=FireApp(), app_delay=spike)
    senders = _senders(dep.deployment, config)
    nodes = {n.id: n for n in dep.deployment.nodes}
    corrs = []
    for k in range(repeats):
        vs = senders[k % len(senders)]
        host = nodes[vs.host]
        ts = EPOCH_BASE_MS + k * repeat_interval_ms
        reading = RawReading(vs.id, vs.quantity, reading_value(k), vs.quantity.unit, ts, host.longitude, host.latitude)
        net.endpoints[vs.id].emit(reading, at=ms_to_us(k * repeat_interval_ms))
        corrs.append((vs.id, reading.key))
    trace = net.run()

    samples = e2ed_samples(trace, [vs.id for vs in senders])
    e2ed = [samples[c] for _, c in corrs if c in samples]
    summaries = {}
    if e2ed:
        summaries["e2ed"] = summarize("e2ed", config.value, e2ed)
    odt = [us_to_ms(b - a) for a, b in request_spans(trace, "FetchFragment", "FragmentReply").values()]
    if odt:
        summaries["odt"] = summarize("odt", config.value, odt)
    disc = [us_to_ms(b - a) for a, b in request_spans(trace, "Discover", "DiscoverReply").values()]
    if disc:
        summaries["discovery"] = summarize("discovery", config.value, disc)
    ann = annotation_spans(trace)
    if ann:
        summaries["annotation"] = summarize("annotation", config.value, ann)
    return RunResult(config, summaries, e2ed, trace, net, corrs)


# -- scalability --------------------------------------------------------------


@dataclass(frozen=True)
class ScaleRow:
    n_aas: int
    discovery_ms: float
    odt_ms: float


def run_scalability(n_aas: Sequence[int] = (1, 2, 4, 8, 16), profile: Optional[CostProfile] = None,
                    quantity: Quantity = Quantity.TEMPERATURE) -> List[ScaleRow]:
    """One OA, ``n`` AAs discovering at once, then fetching one at a time."""
    if profile is None:
        profile, _ = resolve_profile("paper")
    rows = []
    for n in n_aas:
        if n < 1:
            raise ConfigInvalid("n_aas entries must be >= 1")
        net = Network(profile, OverlaySettings())
        net.add_oa("oa@gto-1", "gto-1", NodeClass.GTO, Quantity, holds_full=True)
        net.connect_oas()
        names = [f"aa@node-{i:03d}" for i in range(n)]
        for name in names:
            net.add_aa(name, name[3:], NodeClass.TYPE_B, ["oa@gto-1"])
        for name in names:
            net.at(0, name, Local("discover", data=quantity))
        net.run()
        # space the fetches so no request ever waits in the OA queue
        gap = 2 * profile.us("link_aa_oa_ms") + profile.us("oa_service_ms") + 1000
        start = net.sim.now + gap
        for i, name in enumerate(names):
            net.at(start + i * gap, name, Local("fetch", data=(quantity, "oa@gto-1")))
        trace = net.run()
        disc = [us_to_ms(b - a) for a, b in request_spans(trace, "Discover", "DiscoverReply").values()]
        odt = [us_to_ms(b - a) for a, b in request_spans(trace, "FetchFragment", "FragmentReply").values()]
        rows.append(ScaleRow(n, math.fsum(disc) / len(disc), math.fsum(odt) / len(odt)))
    return rows


def scale_csv(rows: Sequence[ScaleRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_aas", "discovery_ms", "odt_ms"])
    for r in rows:
        w.writerow([r.n_aas, repr(r.discovery_ms), repr(r.odt_ms)])
    return buf.getvalue()


# -- illustrative scenario ----------------------------------------------------

FIG4_READING_VALUE = 85.0


@dataclass
class Fig4Result:
    trace: EventTrace
    transcript: str
    status: str
    network: Network


def run_fig4_scenario(profile: Optional[CostProfile] = None, seed: int = 0) -> Fig4Result:
    """A hot reading crosses both overlays, fires a notification and a status query."""
    if profile is None:
        profile, _ = resolve_profile("paper")
    dep = parse_deployment(data_path("deployments", "fig4.cfg").read_text(encoding="utf-8"), "fig4.cfg")
    settings = OverlaySettings(dep.discovery_mode or DiscoveryMode.RELAY, seed=seed)
    options = DeploymentOptions(rendezvous=dep.rendezvous, oa_adjacency=dep.oa_links)
    net, _ = build_network(dep.deployment, profile, settings, options, app=FireApp(), user=True)
    vs = dep.deployment.sensors[0]
    host = dep.deployment.node(vs.host)
    reading = RawReading(vs.id, vs.quantity, FIG4_READING_VALUE, vs.quantity.unit, EPOCH_BASE_MS,
                         host.longitude, host.latitude)
    net.endpoints[vs.id].emit(reading, at=0)
    trace = net.run()
    user = net.endpoints["user"]
    lines = [trace.dump()]
    for code, payload in user.responses:
        lines.append(f"# user <- {code} {payload}\n")
    status = user.responses[-1][1] if user.responses else ""
    return Fig4Result(trace, "".join(lines), status, net)


def check_golden(transcript: str, golden: Union[str, Path]) -> None:
    expected = Path(golden).read_text(encoding="utf-8")
    if transcript == expected:
        return
    got, want = transcript.splitlines(), expected.splitlines()
    for i, (a, b) in enumerate(zip(got, want), start=1):
        if a != b:
            raise GoldenMismatch(f"line {i}: expected {b!r}, got {a!r}")
    raise GoldenMismatch(f"transcript has {len(got)} lines, golden has {len(want)}")


def default_golden():
    return data_path("golden", "fig4.txt")
