from __future__ import annotations

import math
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from semwsn.agents import AnnotationAgent
from semwsn.cli import main
from semwsn.errors import ConfigInvalid, GoldenMismatch
from semwsn.harness import (
    CSV_HEADER,
    Configuration,
    MetricSummary,
    SpikeInjector,
    check_golden,
    data_path,
    load_deployment,
    parse_deployment,
    read_csv,
    resolve_profile,
    run_configuration,
    run_fig4_scenario,
    run_scalability,
    stage_breakdown,
    summaries_csv,
    summarize,
    write_csv,
)
from semwsn.overlay import OVERLAY_KINDS, CostProfile, Local, OverlaySettings, ms_to_us


@pytest.fixture(scope="module")
def runs():
    return {c: run_configuration(c, repeats=50) for c in "ABC"}


# -- configurations -----------------------------------------------------------


def test_configuration_parse():
    assert Configuration.parse(" b ") is Configuration.B
    with pytest.raises(ConfigInvalid):
        Configuration.parse("D")


def test_b_has_no_overlay_traffic(runs):
    assert not [r for r in runs["B"].trace if r.kind in OVERLAY_KINDS]


def test_c_has_no_aa_annotation(runs):
    net = runs["C"].network
    aas = {a.name for a in net.annotation_agents()}
    assert not [r for r in runs["C"].trace if r.kind == "annotate" and r.dst in aas]
    assert not runs["C"].trace.of_kind("AnnotatedData")


def test_a_fetches_once_then_uses_cache(runs):
    trace = runs["A"].trace
    assert len(trace.of_kind("FetchFragment")) == 1 and len(trace.of_kind("Discover")) == 1
    s = runs["A"].summaries
    assert s["odt"].mean_ms == 94 and s["odt"].n == 1


def test_cache_effect_is_exact(runs):
    result = runs["A"]
    agent: AnnotationAgent = next(a for a in result.network.annotation_agents() if a.discoveries)
    d, f = agent.discoveries[0], agent.fetches[0]
    saved = (d.finished - d.started) + (f.finished - f.started)
    e = result.e2ed
    assert ms_to_us(e[0] - e[1]) == saved
    assert len(set(e[1:])) == 1


@pytest.mark.parametrize("config", ["A", "B", "C"])
def test_stage_decomposition_sums_to_e2ed(runs, config):
    result = runs[config]
    topo = result.network.topology
    for (sensor, corr), e2ed in zip(result.corrs[:4], result.e2ed[:4]):
        stages = stage_breakdown(result.trace, corr, sensor)
        assert math.fsum(s.ms for s in stages) == pytest.approx(e2ed, abs=1e-9)
        assert all(a.end == b.start for a, b in zip(stages, stages[1:]))
        for s in stages:
            if ":" in s.label:
                src, dst = s.label.split(":", 1)[1].split("->")
                assert s.end - s.start == topo.base_latency(src, dst)


def test_b_annotation_component(runs):
    result = runs["B"]
    sensor, corr = result.corrs[0]
    stages = stage_breakdown(result.trace, corr, sensor)
    assert [s.ms for s in stages if s.label.startswith("annotate@")] == [525.0]


def test_missing_sender_is_config_invalid():
    dep = load_deployment()
    dep.deployment.sensors = [vs for vs in dep.deployment.sensors if vs.host.startswith("telosb")]
    with pytest.raises(ConfigInvalid):
        run_configuration("B", repeats=1, deployment=dep)
    with pytest.raises(ConfigInvalid):
        run_configuration("C", repeats=1, deployment=dep)
    with pytest.raises(ConfigInvalid):
        run_configuration("A", repeats=0)


def test_spikes_only_add_latency():
    plain = run_configuration("B", repeats=10)
    spiky = run_configuration("B", repeats=10, spike=SpikeInjector(0.5, 200.0, seed=1))
    diffs = {round(b - a, 6) for a, b in zip(plain.e2ed, spiky.e2ed)}
    assert diffs <= {0.0, 200.0} and 200.0 in diffs
    with pytest.raises(ConfigInvalid):
        SpikeInjector(2.0, 1.0)


def test_jitter_exercises_the_ci():
    profile, _ = resolve_profile("paper")
    r = run_configuration("B", profile, 20, settings=OverlaySettings(seed=3, jitter_ms=5.0))
    assert r.summaries["e2ed"].ci95_ms > 0


# -- metrics and csv ----------------------------------------------------------


def test_ci_math():
    assert summarize("e2ed", "A", [5.0] * 10).ci95_ms == 0
    assert summarize("e2ed", "A", [7.0]).ci95_ms == 0
    xs = [1.0, 2.0, 4.0, 8.0]
    assert summarize("e2ed", "A", xs).ci95_ms == pytest.approx(1.96 * statistics.stdev(xs) / 2)
    with pytest.raises(ValueError):
        summarize("e2ed", "A", [])


@given(samples=st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=30))
def test_csv_round_trip(samples, tmp_path_factory):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    summaries = [summarize("e2ed", "A", samples), summarize("odt", "A", samples[:1])]
    write_csv(summaries, path)
    assert read_csv(path) == summaries


def test_csv_shape_and_rerun(tmp_path, runs):
    one = tmp_path / "one.csv"
    write_csv([runs["B"].summaries["e2ed"]], one)
    lines = one.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 2
    again = tmp_path / "again.csv"
    write_csv([run_configuration("B").summaries["e2ed"]], again)
    assert one.read_bytes() == again.read_bytes()
    with pytest.raises(ValueError):
        summaries_csv([])
    (tmp_path / "bad.csv").write_text("a,b\n")
    with pytest.raises(ConfigInvalid):
        read_csv(tmp_path / "bad.csv")


# -- scalability --------------------------------------------------------------


def test_scalability_trend():
    rows = run_scalability([1, 2, 4, 8, 16])
    disc = [r.discovery_ms for r in rows]
    assert disc[0] == 2 * 40 + 14
    assert all(a < b for a, b in zip(disc, disc[1:]))
    assert {r.odt_ms for r in rows} == {94.0}
    with pytest.raises(ConfigInvalid):
        run_scalability([0])


def test_scalability_under_other_profiles():
    rows = run_scalability([1, 3, 9], CostProfile(link_aa_oa_ms=7, oa_service_ms=2.5))
    assert [r.discovery_ms for r in rows] == [2 * 7 + 2.5, 2 * 7 + 2.5 * 2, 2 * 7 + 2.5 * 5]
    assert {r.odt_ms for r in rows} == {16.5}


# -- illustrative scenario ----------------------------------------------------


def test_fig4_flow_order_and_status():
    result = run_fig4_scenario()
    assert result.status == "InitialFire"
    kinds = [k for k in result.trace.kinds() if k != "annotate"]
    assert kinds[:9] == ["RawData", "FetchFragment", "Forwarded", "FragmentReply", "FragmentReply",
                         "AnnotatedData", "AnnotatedData", "Notify", "QueryRequest"]
    assert kinds[9] == "QueryResponse"
    assert not [r for r in result.trace if isinstance(r.payload, Local) and r.dst.startswith("oa@")]


def test_fig4_is_byte_identical_and_matches_golden(tmp_path):
    a, b = run_fig4_scenario(seed=5), run_fig4_scenario(seed=5)
    assert a.transcript == b.transcript
    golden = tmp_path / "g.txt"
    golden.write_bytes(data_path("golden", "fig4.txt").read_bytes())
    check_golden(run_fig4_scenario().transcript, golden)


def test_golden_mismatch_names_the_line(tmp_path):
    transcript = run_fig4_scenario().transcript
    lines = transcript.splitlines(keepends=True)
    lines[2] = "0.000\tx\ty\tNope\t\n"
    golden = tmp_path / "g.txt"
    golden.write_text("".join(lines))
    with pytest.raises(GoldenMismatch, match="line 3"):
        check_golden(transcript, golden)
    golden.write_text(transcript + "extra\n")
    with pytest.raises(GoldenMismatch):
        check_golden(transcript, golden)


# -- deployment files ---------------------------------------------------------


@pytest.mark.parametrize(
    "text",
    [
        "[node a]\nclass = Wizard\nlongitude = 0\nlatitude = 0\n",
        "[node a]\nclass = GTO\n",
        "[gizmo a]\n",
        "[node a]\nclass = GTO\ncapabilities = Temperature\nlongitude = 0\nlatitude = 0\n[sensor s]\nhost = b\nquantity = Temperature\n",
        "[node a]\nclass = GTO\ncapabilities = Light\nlongitude = 0\nlatitude = 0\n[sensor s]\nhost = a\nquantity = Pressure\n",
        "[overlay]\nrendezvous = no colon here\n",
        "no sections at all",
    ],
)
def test_deployment_errors(text):
    with pytest.raises(ConfigInvalid):
        parse_deployment(text)


def test_bundled_deployments_load():
    dep = load_deployment()
    assert len(dep.deployment.nodes) == 5
    with pytest.raises(ConfigInvalid):
        load_deployment("/nonexistent/deploy.cfg")


# -- cli ----------------------------------------------------------------------


def test_cli_run_and_scale(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["run", "--config", "B", "--repeats", "5", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == MetricSummary("e2ed", "B", 5, 4575.0, 0.0)
    assert main(["scale", "--aas", "1,2"]) == 0
    assert capsys.readouterr().out.startswith("n_aas,discovery_ms,odt_ms\n1,94.0,94.0\n")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["fig4"]) == 0
    bad = tmp_path / "bad.txt"
    bad.write_text("nothing like it\n")
    assert main(["fig4", "--golden", str(bad)]) == 2
    assert main(["run", "--config", "A", "--deploy", str(tmp_path / "missing.cfg")]) == 1
    assert main(["run", "--config", "A", "--profile", str(bad)]) == 1
    with pytest.raises(SystemExit):
        main(["scale", "--aas", "0"])


def test_cli_fig4_write(tmp_path):
    path = tmp_path / "t.txt"
    assert main(["fig4", "--write", str(path)]) == 0
    assert path.read_text() == run_fig4_scenario().transcript


def test_cli_query_and_ontology(tmp_path, capsys):
    from semwsn.agents import annotate
    from semwsn.formats import serialize_ntriples
    from semwsn.model import Quantity, RawReading
    from semwsn.ontology import build_base_ontology, full_fragment

    reading = RawReading("spot-1/temp", Quantity.TEMPERATURE, 85.0, "Cel", 1400000000000, -73.57, 45.5)
    store = tmp_path / "s.nt"
    store.write_bytes(serialize_ntriples(annotate(reading, full_fragment(build_base_ontology())).triples))
    query = tmp_path / "q.rq"
    query.write_text("SELECT ?o WHERE { ?o fda:hasTemperatureType ?t }")
    assert main(["query", "--store", str(store), "--query", str(query)]) == 0
    assert capsys.readouterr().out == "o\n"
    assert main(["query", "--store", str(store), "--query", str(query), "--reason"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "o" and out[1].endswith("obs/spot-1%2Ftemp/1400000000000")
    query.write_text("SELECT ?o WHERE { ?o ?p }")
    assert main(["query", "--store", str(store), "--query", str(query)]) == 1
    assert main(["ontology", "split", "--out", str(tmp_path / "frags")]) == 0
    assert len(list((tmp_path / "frags").glob("*.nt"))) == 5
