"""``xqfed`` command line: run, explain, bench and catalog management."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from . import __version__
from .errors import EXIT_CODES, ConfigError, QuerySyntaxError, XqfedError
from .optimizer import CostEstimate, EstimateMode
from .rewriter import PlanKind

log = logging.getLogger("xqfed")


def _plan_arg(text: str) -> Optional[PlanKind]:
    if text == "auto":
        return None
    try:
        return PlanKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _estimate_arg(text: str):
    if text.startswith("fixed:"):
        try:
            return CostEstimate.from_csv(text[len("fixed:"):])
        except XqfedError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    try:
        return EstimateMode(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected history, oracle or fixed:<six comma-separated numbers>") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xqfed", description="SPARQL with XQuery-based filtering over "
                                "an RDF endpoint and an XML database.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def query_flags(sp):
        sp.add_argument("-q", "--query", required=True, help="query file ('-' for stdin)")
        sp.add_argument("-c", "--config", required=True, help="YAML configuration file")
        sp.add_argument("--plan", type=_plan_arg, default=None, metavar="PLAN",
                        help="auto|parallel|sparql-first|xquery-first (default auto)")
        sp.add_argument("--estimate", type=_estimate_arg, default=None, metavar="MODE",
                        help="history|oracle|fixed:cS,cX,cJoinP,cJoinS,rhoS,rhoX")

    run = sub.add_parser("run", help="execute a query")
    query_flags(run)
    run.add_argument("--format", choices=("json", "csv", "table"), default=None,
                     help="result format (default from config, else json)")
    run.add_argument("--explain", action="store_true",
                     help="print the plan report instead of executing")
    run.add_argument("--report", action="store_true",
                     help="after executing, print the plan report to stderr")

    ex = sub.add_parser("explain", help="show estimates, plan costs and rewritten queries")
    query_flags(ex)
    ex.add_argument("--doc-ids", default=None,
                    help="comma-separated document ids for the pushdown stage")
    ex.add_argument("--format", choices=("text", "json"), default="text")

    b = sub.add_parser("bench", help="time all plans on synthetic scenarios")
    b.add_argument("--scenario", action="append", choices=("CS", "LS", "DS"),
                   help="scenario preset; repeatable (default: all three)")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repetitions", type=int, default=5)
    b.add_argument("-o", "--output", default="-", help="CSV file ('-' for stdout)")
    b.add_argument("--export", metavar="DIR", default=None,
                   help="write the scenario fixtures, a config and a query to DIR and exit")

    cat = sub.add_parser("catalog", help="inspect or reset the execution history")
    cat.add_argument("action", choices=("show", "clear"))
    cat.add_argument("-c", "--config", required=True)
    return p


def _read_query(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read query file {path}: {exc}") from None


def _mediator(args, cfg):
    from .executor import Mediator
    est = getattr(args, "estimate", None)
    if isinstance(est, CostEstimate):
        cfg.optimizer.mode = EstimateMode.FIXED
        cfg.optimizer.fixed = est
    elif est is not None:
        cfg.optimizer.mode = est
    try:
        return Mediator.from_config(cfg)
    except OSError as exc:
        raise ConfigError(f"cannot load backend fixture: {exc}") from None


def _format_results(table, fmt: str) -> str:
    if fmt == "csv":
        return table.to_csv()
    if fmt == "table":
        return table.to_table()
    return table.to_json_text() + "\n"


def cmd_run(args, out, err) -> int:
    from .config import load_config
    cfg = load_config(args.config)
    text = _read_query(args.query)
    m = _mediator(args, cfg)
    if args.explain:
        report = m.explain(text, args.plan)
        out.write(report.to_text())
        return 0
    table, report = m.run(text, args.plan)
    out.write(_format_results(table, args.format or cfg.output_format))
    if args.report:
        err.write(report.to_text())
    return 0


def cmd_explain(args, out, err) -> int:
    from .config import load_config
    cfg = load_config(args.config)
    text = _read_query(args.query)
    m = _mediator(args, cfg)
    doc_ids = [x.strip() for x in args.doc_ids.split(",") if x.strip()] if args.doc_ids else None
    report = m.explain(text, args.plan, doc_ids=doc_ids)
    if args.format == "json":
        out.write(report.to_json(timings=False) + "\n")
    else:
        out.write(report.to_text())
    return 0


def export_scenario(scenario, directory: Path) -> Path:
    """Write fixtures, a mock config and a mid-grid query; returns the config path."""
    from .bench import COLLECTION
    directory.mkdir(parents=True, exist_ok=True)
    scenario.store.dump(directory / "triples.jsonl")
    docs = directory / "docs"
    docs.mkdir(exist_ok=True)
    for name, body in scenario.docs.items():
        (docs / name).write_text(body, encoding="utf-8")
    spec = scenario.spec
    cfg = {
        "backends": [
            {"id": "rdf", "kind": "sparql-mock", "fixture": "triples.jsonl",
             "simulated_latency": list(spec.sparql_latency)},
            {"id": "xml", "kind": "xml-mock", "fixture": "docs", "collection_name": COLLECTION,
             "simulated_latency": list(spec.xml_latency)},
        ],
        "optimizer": {"mode": "oracle"},
        "catalog_path": "catalog.jsonl",
    }
    path = directory / "config.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    k = spec.sparql_grid[len(spec.sparql_grid) // 2]
    m = spec.xquery_grid[len(spec.xquery_grid) // 2]
    (directory / "query.rq").write_text(scenario.query(k, m), encoding="utf-8")
    return path


def cmd_bench(args, out, err) -> int:
    from . import bench
    names = args.scenario or ["CS", "LS", "DS"]
    if args.repetitions < 1:
        raise ConfigError("--repetitions must be >= 1")
    if args.export:
        spec = bench.PRESETS[names[0]].with_seed(args.seed)
        path = export_scenario(bench.generate_scenario(spec), Path(args.export))
        out.write(f"{path}\n")
        return 0
    results = []
    for name in names:
        spec = bench.PRESETS[name].with_seed(args.seed)
        err.write(f"running {name} ({len(spec.sparql_grid) * len(spec.xquery_grid)} grid points)\n")
        results.extend(bench.run_benchmark(spec, args.repetitions))
    failed = [r for r in results if r.failed]
    for r in failed:
        err.write(f"failed: {r.scenario} {r.plan.value} k={r.sparql_sel} m={r.xquery_sel}: "
                  f"{r.error}\n")
    if args.output == "-":
        bench.write_csv(results, out)
    else:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            bench.write_csv(results, fh)
    return 0


def cmd_catalog(args, out, err) -> int:
    from .config import build_catalog, load_config
    cfg = load_config(args.config)
    if not cfg.catalog_path:
        raise ConfigError("no catalog_path configured")
    stats = build_catalog(cfg)
    if args.action == "clear":
        stats.clear()
        out.write(f"cleared {cfg.catalog_path}\n")
        return 0
    for entry in stats.history:
        out.write(entry.to_json() + "\n")
    for bid, bs in sorted(stats.per_backend.items()):
        err.write(f"{bid}: observations={bs.observed_count} mean_ms={bs.observed_mean_ms:.3f}\n")
    return 0


COMMANDS = {"run": cmd_run, "explain": cmd_explain, "bench": cmd_bench, "catalog": cmd_catalog}


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors count as configuration errors
        return EXIT_CODES["config"] if exc.code else 0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=err)
    try:
        return COMMANDS[args.command](args, out, err)
    except QuerySyntaxError as exc:
        err.write(f"parse error at line {exc.line}, column {exc.column}: {exc}\n")
        return EXIT_CODES["parse"]
    except XqfedError as exc:
        err.write(f"{exc.stage} error: {type(exc).__name__}: {exc}\n")
        return EXIT_CODES.get(exc.stage, 1)


if __name__ == "__main__":
    sys.exit(main())
