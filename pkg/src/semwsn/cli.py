"""Command-line entry point: ``semwsn <command> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .errors import GoldenMismatch, SemWSNError


def _aas(text: str) -> List[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("AA counts must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semwsn", description="Semantic WSN annotation pipeline and experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run Configuration A, B or C and write metric summaries")
    run.add_argument("--deploy", help="deployment file (default: the bundled one)")
    run.add_argument("--profile", default="paper", help="cost profile file, or 'paper' (default)")
    run.add_argument("--config", required=True, choices=["A", "B", "C", "a", "b", "c"])
    run.add_argument("--repeats", type=int, default=50)
    run.add_argument("--out", help="CSV output path (default: stdout)")

    scale = sub.add_parser("scale", help="OA discovery time as the number of AAs grows")
    scale.add_argument("--aas", type=_aas, default=[1, 2, 4, 8, 16])
    scale.add_argument("--profile", default="paper")
    scale.add_argument("--out", help="CSV output path (default: stdout)")

    fig4 = sub.add_parser("fig4", help="run the illustrative scenario and compare against a golden transcript")
    fig4.add_argument("--golden", help="golden transcript (default: the bundled one)")
    fig4.add_argument("--write", metavar="PATH", help="write the transcript here instead of comparing")

    query = sub.add_parser("query", help="run a query over an N-Triples store")
    query.add_argument("--store", required=True, help="N-Triples file")
    query.add_argument("--query", required=True, help="query file")
    query.add_argument("--reason", action="store_true", help="load into the fire application and query its closure")

    onto = sub.add_parser("ontology", help="base ontology tools")
    onto_sub = onto.add_subparsers(dest="action", required=True)
    split = onto_sub.add_parser("split", help="write one N-Triples file per fragment")
    split.add_argument("--out", required=True)

    serve = sub.add_parser("serve", help="serve the fire application over the line protocol")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=7070)
    return p


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    from .harness import load_deployment, resolve_profile, run_configuration, summaries_csv

    profile, settings = resolve_profile(args.profile)
    deployment = load_deployment(args.deploy)
    result = run_configuration(args.config, profile, args.repeats, deployment, settings)
    _emit(summaries_csv(list(result.summaries.values())), args.out)
    return 0


def cmd_scale(args) -> int:
    from .harness import resolve_profile, run_scalability, scale_csv

    profile, _ = resolve_profile(args.profile)
    _emit(scale_csv(run_scalability(args.aas, profile)), args.out)
    return 0


def cmd_fig4(args) -> int:
    from importlib import resources

    from .harness import check_golden, default_golden, run_fig4_scenario

    result = run_fig4_scenario()
    if args.write:
        Path(args.write).write_text(result.transcript, encoding="utf-8")
        return 0
    if args.golden:
        check_golden(result.transcript, args.golden)
    else:
        with resources.as_file(default_golden()) as path:
            check_golden(result.transcript, path)
    sys.stdout.write(result.transcript)
    return 0


def cmd_query(args) -> int:
    from .fire_app import FireApp
    from .formats import parse_ntriples
    from .query import execute, parse_query, rows_to_csv
    from .store import TripleStore

    triples = parse_ntriples(Path(args.store).read_bytes())
    text = Path(args.query).read_text(encoding="utf-8")
    if args.reason:
        app = FireApp()
        app.ingest_triples(triples)
        sys.stdout.write(app.query(text))
        return 0
    parsed = parse_query(text)
    sys.stdout.write(rows_to_csv(parsed, execute(parsed, TripleStore(triples))))
    return 0


def cmd_ontology(args) -> int:
    from .ontology import build_base_ontology, dump_fragments

    for path in dump_fragments(build_base_ontology(), args.out):
        print(path)
    return 0


def cmd_serve(args) -> int:  # pragma: no cover - interactive
    from .fire_app import FireApp, FireAppServer

    with FireAppServer(FireApp(), (args.host, args.port)) as server:
        host, port = server.server_address[:2]
        print(f"listening on {host}:{port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0


COMMANDS = {
    "run": cmd_run,
    "scale": cmd_scale,
    "fig4": cmd_fig4,
    "query": cmd_query,
    "ontology": cmd_ontology,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except GoldenMismatch as exc:
        print(f"golden mismatch: {exc}", file=sys.stderr)
        return 2
    except (SemWSNError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
