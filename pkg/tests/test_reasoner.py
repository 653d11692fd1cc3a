from __future__ import annotations

import random
from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_closure
from semwsn.errors import NonNumericComparison, RuleSyntaxError, UnboundHeadVariable, UnknownBuiltin, UnknownPrefix
from semwsn.fire_app import RULE_ALIASES, default_rules
from semwsn.reasoner import BuiltinCall, Rule, RuleSet, apply_rules, builtin_eval, parse_rules
from semwsn.store import TripleStore
from semwsn.terms import FDA, IRI, XSD_DOUBLE, XSD_INTEGER, Literal, Triple, Variable, q

RULE1 = """[Rule1: (?output ssn:hasValue ?Value)
greaterThan(?Value,80), (?output rdf:type
base:TemperatureOutput),
(?output base:hasUnit base:DegreeCelsius) ->
(?output fda:hasTemperatureType:
fda:HighTemperature) ]"""

RULE2 = """[Rule2: (?output fda:hasTemperatureType
fda:HighTemperature)
(?output fda:hasHumidityLevel fda:LowHumidity)
(?output fda:hasCO2Level fda:HighCO2) ->
(?output fda:hasFireSituation fda: fireBlaze)]"""

OBS = IRI("http://ex.org/obs1")


def temperature_store(value: str) -> TripleStore:
    return TripleStore([
        Triple(OBS, q("ssn:hasValue"), Literal(value, XSD_DOUBLE)),
        Triple(OBS, q("rdf:type"), q("base:TemperatureOutput")),
        Triple(OBS, q("base:hasUnit"), q("base:DegreeCelsius")),
    ])


def test_rule1_verbatim_structure():
    [rule] = parse_rules(RULE1)
    assert rule.name == "Rule1"
    assert len(rule.patterns) == 3 and len(rule.builtins) == 1
    assert rule.builtins[0] == BuiltinCall("greaterThan", (Variable("Value"), Literal("80", XSD_INTEGER)))
    assert rule.head == ((Variable("output"), q("fda:hasTemperatureType"), q("fda:HighTemperature")),)


def test_rule2_verbatim_structure_and_alias():
    [raw] = parse_rules(RULE2)
    assert len(raw.patterns) == 3
    assert raw.head == ((Variable("output"), q("fda:hasFireSituation"), IRI(FDA + "fireBlaze")),)
    [canon] = parse_rules(RULE2, aliases=RULE_ALIASES)
    assert canon.head[0][2] == q("fda:FireBlaze")


def test_rule1_strict_threshold():
    rules = parse_rules(RULE1)
    hot = apply_rules(temperature_store("85.0"), rules)
    assert hot.inferred == {Triple(OBS, q("fda:hasTemperatureType"), q("fda:HighTemperature"))}
    assert len(apply_rules(temperature_store("80.0"), rules).inferred) == 0
    assert len(apply_rules(temperature_store("80.0000001"), rules).inferred) == 1


def test_rule1_needs_celsius():
    store = temperature_store("85.0")
    store.discard(Triple(OBS, q("base:hasUnit"), q("base:DegreeCelsius")))
    store.add(Triple(OBS, q("base:hasUnit"), q("base:Lux")))
    assert len(apply_rules(store, parse_rules(RULE1)).inferred) == 0


def test_rule2_fires_on_three_levels():
    store = TripleStore([
        Triple(OBS, q("fda:hasTemperatureType"), q("fda:HighTemperature")),
        Triple(OBS, q("fda:hasHumidityLevel"), q("fda:LowHumidity")),
        Triple(OBS, q("fda:hasCO2Level"), q("fda:HighCO2")),
    ])
    result = apply_rules(store, parse_rules(RULE2, aliases=RULE_ALIASES))
    assert result.inferred == {Triple(OBS, q("fda:hasFireSituation"), q("fda:FireBlaze"))}
    assert result.rounds == 2


def test_rule_errors():
    with pytest.raises(UnboundHeadVariable):
        parse_rules("[R: (?a rdf:type ?b) -> (?c rdf:type ?b)]")
    with pytest.raises(UnknownBuiltin):
        parse_rules("[R: (?a ssn:hasValue ?v) between(?v, 1) -> (?a rdf:type ssn:Sensor)]")
    with pytest.raises(UnknownPrefix):
        parse_rules("[R: (?a nope:x ?v) -> (?a rdf:type ssn:Sensor)]")
    with pytest.raises(RuleSyntaxError) as info:
        parse_rules("[R: (?a rdf:type ?b) (?a rdf:type ?b)]")
    assert info.value.offset >= 0
    with pytest.raises(RuleSyntaxError):
        parse_rules("[R: (?a rdf:type) -> (?a rdf:type ssn:Sensor)]")


def test_duplicate_rule_names_rejected():
    with pytest.raises(RuleSyntaxError):
        parse_rules("[R: (?a rdf:type ?b) -> (?a rdf:type ?b)] [R: (?a rdf:type ?b) -> (?a rdf:type ?b)]")


def test_builtin_eval():
    assert builtin_eval("greaterThan", Literal("85.0", XSD_DOUBLE), Literal("80", XSD_INTEGER))
    assert not builtin_eval("greaterThan", Literal("80"), Literal("80"))
    assert builtin_eval("ge", Literal("80"), Literal("80.0"))
    assert builtin_eval("le", Literal("-1e3"), Literal("0"))
    assert builtin_eval("lessThan", Literal("0.1"), Literal("0.2"))
    with pytest.raises(NonNumericComparison):
        builtin_eval("greaterThan", Literal("hot"), Literal("80"))
    with pytest.raises(NonNumericComparison):
        builtin_eval("greaterThan", q("fda:FireBlaze"), Literal("80"))
    with pytest.raises(UnknownBuiltin):
        builtin_eval("between", Literal("1"), Literal("2"))


def test_shipped_rule_file_is_faithful():
    text = resources.files("semwsn").joinpath("data/fire.rules").read_text()
    assert RULE1 in text
    assert RULE2 in text
    names = [r.name for r in default_rules()]
    assert names[:2] == ["Rule1", "Rule2"]
    assert {"LowHumidity", "HighHumidity", "HighCO2", "LowCO2", "InitialFire"} <= set(names)


def test_rule_prefix_declarations():
    rules = parse_rules("@prefix ex: <http://ex.org/> .\n[R: (?a ex:p ?b) -> (?b ex:q ?a)]")
    [rule] = rules
    assert rule.head[0][1] == IRI("http://ex.org/q")


# -- closure oracle -----------------------------------------------------------

NODES = [IRI(f"http://ex.org/n{i}") for i in range(5)]
PREDS = [IRI(f"http://ex.org/p{i}") for i in range(3)]
NUMS = [Literal(str(v), XSD_DOUBLE) for v in ("1.5", "80", "85.0", "-3")]
VALUE = IRI("http://ex.org/value")  # the only predicate carrying literals


def random_rules(rng: random.Random) -> RuleSet:
    rules = []
    for i in range(rng.randint(1, 3)):
        a, b, c = Variable("a"), Variable("b"), Variable("c")
        shape = rng.randrange(4)
        p1, p2, p3 = (rng.choice(PREDS) for _ in range(3))
        if shape == 0:  # transitive-ish join
            body = ((a, p1, b), (b, p2, c))
            head = ((a, p3, c),)
        elif shape == 1:  # symmetric
            body = ((a, p1, b),)
            head = ((b, p1, a),)
        elif shape == 2:  # threshold
            body = ((a, VALUE, b), BuiltinCall(rng.choice(["greaterThan", "lessThan", "ge", "le"]), (b, Literal("80"))))
            head = ((a, p3, rng.choice(NODES)),)
        else:  # constant-bound typing
            body = ((a, p1, rng.choice(NODES)),)
            head = ((a, p2, rng.choice(NODES)),)
        rules.append(Rule(f"r{i}", body, head))
    return RuleSet(rules)


def random_store(rng: random.Random, size: int) -> TripleStore:
    store = TripleStore()
    while len(store) < size:
        if rng.random() < 0.3:
            store.add(Triple(rng.choice(NODES), VALUE, rng.choice(NUMS)))
        else:
            store.add(Triple(rng.choice(NODES), rng.choice(PREDS), rng.choice(NODES)))
    return store


def test_closure_matches_brute_force_on_random_fixtures():
    rng = random.Random(7)
    for _ in range(40):
        store = random_store(rng, rng.randint(0, 12))
        rules = random_rules(rng)
        result = apply_rules(store, rules)
        assert result.closure == brute_force_closure(store, rules)


def test_closure_matches_brute_force_on_fire_fixture():
    store = temperature_store("85.0")
    store.update([
        Triple(OBS, q("fda:hasHumidityLevel"), q("fda:LowHumidity")),
        Triple(OBS, q("fda:hasCO2Level"), q("fda:HighCO2")),
    ])
    rules = parse_rules(RULE1 + RULE2, aliases=RULE_ALIASES)
    result = apply_rules(store, rules)
    assert result.closure == brute_force_closure(store, rules)
    assert Triple(OBS, q("fda:hasFireSituation"), q("fda:FireBlaze")) in result.inferred


@given(st.integers(0, 2**32), st.integers(0, 15))
def test_closure_properties(seed, size):
    rng = random.Random(seed)
    store = random_store(rng, size)
    rules = random_rules(rng)
    result = apply_rules(store, rules)
    assert store.triples() <= result.closure.triples()
    again = apply_rules(result.closure, rules)
    assert len(again.inferred) == 0 and again.rounds == 1
    reversed_rules = RuleSet(list(reversed(list(rules))))
    assert apply_rules(store, reversed_rules).closure == result.closure
    assert result.rounds <= len(result.inferred) + 1
    assert not (result.inferred.triples() & store.triples())
