"""Acceptance criteria, one test each, with their runtime budgets.

Each test prints a single ``criterion N: PASS|FAIL`` line straight to the
terminal, whatever the capture settings.
"""

from __future__ import annotations

import contextlib
import itertools
import json
import random
import time
from collections import Counter

import pytest

from oracles import brute_force_closure, linear_match, nested_loop_query
from semwsn.agents import annotate
from semwsn.fire_app import FireApp, RULE_ALIASES
from semwsn.formats import (
    parse_ntriples,
    parse_senml,
    parse_simple_string,
    serialize_ntriples,
    serialize_senml,
    serialize_simple_string,
)
from semwsn.harness import (
    load_deployment,
    read_csv,
    resolve_profile,
    run_configuration,
    run_fig4_scenario,
    run_scalability,
    summarize,
    write_csv,
)
from semwsn.model import Quantity, RawReading
from semwsn.ontology import build_base_ontology, common_core, full_fragment, merge_fragments, split_ontology
from semwsn.overlay import OVERLAY_KINDS, OverlaySettings, ms_to_us
from semwsn.query import Query, RegexFilter, execute, parse_query
from semwsn.reasoner import BuiltinCall, Rule, RuleSet, apply_rules, parse_rules
from semwsn.store import TripleStore, store_match
from semwsn.terms import FDA, IRI, XSD_DOUBLE, XSD_STRING, Literal, Triple, Variable, q

T0 = 1400000000000
LON, LAT = -73.57, 45.50
FRAGMENT = full_fragment(build_base_ontology())


@pytest.fixture
def criterion(capsys):
    @contextlib.contextmanager
    def run(number: int, budget_s: float, title: str):
        start = time.perf_counter()
        try:
            yield
            elapsed = time.perf_counter() - start
            assert elapsed < budget_s, f"took {elapsed:.2f}s, budget {budget_s}s"
        except BaseException as exc:
            with capsys.disabled():
                print(f"\ncriterion {number}: FAIL {title} ({exc.__class__.__name__}: {exc})")
            raise
        with capsys.disabled():
            print(f"\ncriterion {number}: PASS {title} ({elapsed:.2f}s < {budget_s}s)")

    return run


def obs_body(source, quantity, value, t=T0, lon=LON, lat=LAT) -> bytes:
    reading = RawReading(source, quantity, value, quantity.unit, t, lon, lat)
    return serialize_ntriples(annotate(reading, FRAGMENT).triples)


# 1 ---------------------------------------------------------------------------


def test_criterion_1_rule_fidelity(criterion):
    with criterion(1, 1.0, "Rule1 strict threshold"):
        app = FireApp()
        app.ingest(obs_body("spot-1/temp", Quantity.TEMPERATURE, 85.0))
        high = app.store.inferred.match((None, q("fda:hasTemperatureType"), q("fda:HighTemperature")))
        assert any("obs/" in t.subject.value for t in high)
        cold = FireApp()
        cold.ingest(obs_body("spot-1/temp", Quantity.TEMPERATURE, 80.0))
        assert not cold.store.inferred.match((None, q("fda:hasTemperatureType"), None))
        assert not cold.notifications()


# 2 ---------------------------------------------------------------------------


def test_criterion_2_fire_inference(criterion):
    with criterion(2, 1.0, "FireBlaze inferred and returned by the fire query"):
        app = FireApp()
        app.ingest(obs_body("spot-1/temp", Quantity.TEMPERATURE, 85.0))
        app.ingest(obs_body("gto-1/hum", Quantity.HUMIDITY, 12.0, T0 + 1000))
        app.ingest(obs_body("gto-1/co2", Quantity.CO2, 1500.0, T0 + 2000))
        assert app.store.inferred.match((None, q("fda:hasFireSituation"), q("fda:FireBlaze")))
        from importlib import resources

        text = resources.files("semwsn").joinpath("data/queries/fire.rq").read_text()
        rows = app.query(text).splitlines()[1:]
        assert len(rows) >= 1
        assert all(r.endswith(FDA + "FireBlaze") for r in rows)


# 3 ---------------------------------------------------------------------------


def test_criterion_3_split_merge(criterion):
    with criterion(3, 1.0, "fragments merge back to the base ontology"):
        base = build_base_ontology()
        frags = split_ontology(base)
        assert set(frags) == set(Quantity) and len(frags) == 4
        assert merge_fragments(list(frags.values())).triples() == base.store.triples()
        core = common_core(base).triples()
        assert core and all(core <= f.triples.triples() for f in frags.values())


# 4 ---------------------------------------------------------------------------

ANCHORS = {"A": 3566.0, "B": 4575.0, "C": 3187.0}


def test_criterion_4_calibrated_timing(criterion):
    with criterion(4, 30.0, "calibrated E2ED/annotation/ODT anchors"):
        profile, settings = resolve_profile("paper")
        results = {c: run_configuration(c, profile, 50, settings=settings) for c in "ABC"}
        for c, anchor in ANCHORS.items():
            s = results[c].summaries["e2ed"]
            assert s.n == 50
            assert abs(s.mean_ms - anchor) <= 0.05 * anchor, (c, s.mean_ms)
        ann = results["B"].summaries["annotation"]
        assert ann.mean_ms == 525.0 and ann.ci95_ms == 0.0
        a = results["A"]
        agent = next(x for x in a.network.annotation_agents() if x.fetches)
        assert agent.fetches[0].elapsed_ms == 94.0
        assert a.summaries["odt"].mean_ms == 94.0


# 5 ---------------------------------------------------------------------------


def profile_family(seed: int, count: int):
    """Profiles with annotate_typeb above annotate_gto plus the amortized fetch.

    Radio, SA and application links stay at their calibrated values; the
    annotation, OA service and overlay link costs vary.
    """
    base, _ = resolve_profile("paper")
    rng = random.Random(seed)
    out = [base]
    while len(out) < count:
        gto = rng.uniform(0, 60)
        service = rng.uniform(0, 60)
        aa_oa = rng.uniform(0, 120)
        amortized = (2 * (2 * aa_oa + service)) / 50
        typeb = gto + amortized + rng.uniform(1, 1500)
        out.append(base.replace(annotate_gto_ms=gto, annotate_typeb_ms=typeb, oa_service_ms=service,
                                link_aa_oa_ms=aa_oa, link_oa_oa_ms=rng.uniform(0, 120),
                                annotate_app_ms=rng.uniform(0, gto)))
    return out


def test_criterion_5_ordering_and_structure(criterion):
    with criterion(5, 30.0, "E2ED(B) > E2ED(A) > E2ED(C), B overlay-free, exact cache effect"):
        for profile in profile_family(seed=5, count=5):
            runs = {c: run_configuration(c, profile, 50, settings=OverlaySettings()) for c in "ABC"}
            e = {c: r.summaries["e2ed"].mean_ms for c, r in runs.items()}
            assert e["B"] > e["A"] > e["C"], (profile, e)
            assert not [r for r in runs["B"].trace if r.kind in OVERLAY_KINDS]
            a = runs["A"]
            agent = next(x for x in a.network.annotation_agents() if x.discoveries)
            d, f = agent.discoveries[0], agent.fetches[0]
            assert ms_to_us(a.e2ed[0] - a.e2ed[1]) == (d.finished - d.started) + (f.finished - f.started)


# 6 ---------------------------------------------------------------------------


def test_criterion_6_scalability(criterion):
    with criterion(6, 30.0, "discovery grows with AAs, ODT constant"):
        rows = run_scalability([1, 2, 4, 8, 16])
        assert [r.n_aas for r in rows] == [1, 2, 4, 8, 16]
        disc = [r.discovery_ms for r in rows]
        assert all(a < b for a, b in zip(disc, disc[1:])), disc
        assert len({r.odt_ms for r in rows}) == 1


# 7 ---------------------------------------------------------------------------

NODES = [IRI(f"http://ex.org/n{i}") for i in range(6)]
PREDS = [IRI(f"http://ex.org/p{i}") for i in range(3)]
VALUE = IRI("http://ex.org/value")
NUMS = [Literal(v, XSD_DOUBLE) for v in ("12.5", "80", "80.5", "95")]


def fixture_store(rng, size):
    store = TripleStore()
    while len(store) < size:
        if rng.random() < 0.25:
            store.add(Triple(rng.choice(NODES), VALUE, rng.choice(NUMS)))
        else:
            store.add(Triple(rng.choice(NODES), rng.choice(PREDS), rng.choice(NODES)))
    return store


def fixture_rules(rng):
    a, b, c = Variable("a"), Variable("b"), Variable("c")
    rules = []
    for i in range(rng.randint(1, 3)):
        p1, p2, p3 = (rng.choice(PREDS) for _ in range(3))
        shape = rng.randrange(3)
        if shape == 0:
            rules.append(Rule(f"join{i}", ((a, p1, b), (b, p2, c)), ((a, p3, c),)))
        elif shape == 1:
            rules.append(Rule(f"sym{i}", ((a, p1, b),), ((b, p1, a),)))
        else:
            rules.append(Rule(f"cut{i}", ((a, VALUE, b), BuiltinCall("greaterThan", (b, Literal("80")))),
                              ((a, p3, rng.choice(NODES)),)))
    return RuleSet(rules)


def random_query(rng):
    vs = [Variable(n) for n in "abc"]
    patterns = [(rng.choice(vs + NODES[:1]), rng.choice(PREDS + [VALUE]), rng.choice(vs + NODES[:2])) for _ in range(rng.randint(1, 3))]
    bound = sorted({t.name for p in patterns for t in p if isinstance(t, Variable)}) or None
    if bound is None:
        patterns[0] = (vs[0],) + patterns[0][1:]
        bound = ["a"]
    filters = [RegexFilter(rng.choice(bound), rng.choice(["n[0-2]$", "8", "^http"]), rng.choice(["", "i"]))] if rng.random() < 0.4 else []
    return Query(rng.sample(bound, rng.randint(1, len(bound))), patterns, filters)


def test_criterion_7_oracles(criterion):
    with criterion(7, 60.0, "closure, query and match agree with their oracles"):
        rng = random.Random(7)
        fire_rules = parse_rules(
            "[Rule1: (?output ssn:hasValue ?Value) greaterThan(?Value,80), (?output rdf:type base:TemperatureOutput), "
            "(?output base:hasUnit base:DegreeCelsius) -> (?output fda:hasTemperatureType fda:HighTemperature)]",
            aliases=RULE_ALIASES,
        )
        fire_store = TripleStore(parse_ntriples(obs_body("s", Quantity.TEMPERATURE, 85.0)))
        assert apply_rules(fire_store, fire_rules).closure == brute_force_closure(fire_store, fire_rules)
        for size in list(range(0, 51, 5)) + [50] * 9:
            store, rules = fixture_store(rng, size), fixture_rules(rng)
            assert apply_rules(store, rules).closure == brute_force_closure(store, rules)

        for _ in range(100):
            store, query = fixture_store(rng, rng.randint(0, 15)), random_query(rng)
            got = Counter(tuple(r[n] for n in query.select) for r in execute(query, store))
            assert got == nested_loop_query(store, query)

        for _ in range(20):
            triples = list(fixture_store(rng, 30))
            store = TripleStore(triples)
            t = rng.choice(triples)
            for mask in itertools.product([False, True], repeat=3):
                pattern = tuple(v if keep else None for v, keep in zip(t, mask))
                assert store_match(store, pattern) == linear_match(triples, pattern)


# 8 ---------------------------------------------------------------------------


def random_reading(rng, source=None, lon=None, lat=None):
    quantity = rng.choice(list(Quantity))
    value = rng.choice([rng.uniform(-1e6, 1e6), rng.uniform(-1, 1), float(rng.randint(-100, 100)), 0.1 + 0.2])
    return RawReading(
        source or "".join(rng.choice("abcxyz0123-_./") for _ in range(rng.randint(1, 12))),
        quantity, value, quantity.unit, rng.randint(0, 4_000_000_000_000),
        lon if lon is not None else rng.uniform(-180, 180),
        lat if lat is not None else rng.uniform(-90, 90),
    )


def random_triple(rng):
    iri = lambda: IRI("http://ex.org/" + "".join(rng.choice("abc019_#/-") for _ in range(rng.randint(1, 8))))
    alphabet = 'ab "\\\n\t\ré\U0001F525<>.'
    if rng.random() < 0.5:
        obj = iri()
    else:
        obj = Literal("".join(rng.choice(alphabet) for _ in range(rng.randint(0, 10))),
                      rng.choice([XSD_STRING, XSD_DOUBLE, "http://ex.org/dt"]))
    return Triple(iri(), iri(), obj)


def test_criterion_8_round_trips(criterion, tmp_path):
    with criterion(8, 30.0, "N-Triples, simple string, SenML and CSV round trips x200"):
        rng = random.Random(8)
        for _ in range(200):
            triples = [random_triple(rng) for _ in range(rng.randint(0, 10))]
            wire = serialize_ntriples(triples)
            assert parse_ntriples(wire) == triples
            assert serialize_ntriples(parse_ntriples(wire)) == wire
        for _ in range(200):
            reading = random_reading(rng)
            wire = serialize_simple_string(reading)
            assert parse_simple_string(wire) == reading
            assert serialize_simple_string(parse_simple_string(wire)) == wire
        for _ in range(200):
            src = "".join(rng.choice("abcxyz0123-_.") for _ in range(rng.randint(1, 10)))
            lon, lat = rng.uniform(-180, 180), rng.uniform(-90, 90)
            pack = [random_reading(rng, src, lon, lat) for _ in range(rng.randint(1, 4))]
            wire = serialize_senml(pack)
            assert parse_senml(wire) == pack
            assert serialize_senml(parse_senml(wire)) == wire
            json.loads(wire)
        path = tmp_path / "s.csv"
        for _ in range(200):
            summaries = [summarize(m, c, [rng.uniform(0, 1e5) for _ in range(rng.randint(1, 20))])
                         for m, c in [("e2ed", rng.choice("ABC")), ("odt", "A")]]
            write_csv(summaries, path)
            first = path.read_bytes()
            assert read_csv(path) == summaries
            write_csv(read_csv(path), path)
            assert path.read_bytes() == first


# 9 ---------------------------------------------------------------------------

FIG4_ORDER = ["RawData", "FetchFragment", "Forwarded", "FragmentReply", "FragmentReply",
              "AnnotatedData", "AnnotatedData", "Notify", "QueryRequest", "QueryResponse"]


def test_criterion_9_illustrative_golden(criterion, tmp_path):
    with criterion(9, 5.0, "illustrative run matches golden order and answers InitialFire"):
        from semwsn.harness import check_golden, data_path

        first, second = run_fig4_scenario(seed=0), run_fig4_scenario(seed=0)
        assert first.transcript == second.transcript
        kinds = [k for k in first.trace.kinds(messages_only=True)]
        assert kinds[: len(FIG4_ORDER)] == FIG4_ORDER
        assert first.status == "InitialFire"
        golden = tmp_path / "fig4.txt"
        golden.write_bytes(data_path("golden", "fig4.txt").read_bytes())
        check_golden(first.transcript, golden)


# 10 --------------------------------------------------------------------------


def test_criterion_10_determinism(criterion):
    with criterion(10, 10.0, "identical inputs and seed give byte-identical traces"):
        dep = load_deployment()
        for config in "ABC":
            settings = OverlaySettings(seed=11, jitter_ms=3.0)
            a = run_configuration(config, None, 10, dep, settings).trace.dump()
            b = run_configuration(config, None, 10, load_deployment(), settings).trace.dump()
            assert a == b and a
        assert run_fig4_scenario(seed=3).trace.dump() == run_fig4_scenario(seed=3).trace.dump()
        proactive = OverlaySettings(discovery_mode="proactive", seed=2, jitter_ms=1.0)
        a = run_configuration("A", None, 5, dep, proactive).trace.dump()
        assert "Advertise" in a
        assert a == run_configuration("A", None, 5, dep, proactive).trace.dump()
