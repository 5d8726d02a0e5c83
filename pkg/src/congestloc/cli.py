"""Command-line front end: ingest, analyze, simulate, evaluate, report.

Exit codes: 0 success, 1 finished with warnings, 2 fatal input error.
Every command writes a ``manifest.json`` with its parameters and the
SHA-256 digests of its inputs and outputs.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from ._io import atomic_text, sha256_file
from .evaluate import Confusion, KeyMismatchError, evaluate, write_confusion
from .metrics import MIN_TIER_DAYS, RcParams
from .model import (
    FILENAMES,
    IngestError,
    Schema,
    Technology,
    group_by_month,
    ingest_path,
    write_records,
    write_rejects,
)
from .pipeline import (
    analyze,
    join_results,
    read_exclusions,
    read_rc,
    read_verdicts,
    write_exclusions,
    write_rc,
    write_verdicts,
)
from .report import GroupBy, Metric, anonymize, plot_prevalence, prevalence_series, summarize, write_prevalence, write_summary
from .scenario import ScenarioError, parse_scenario, scenario_text
from .simulator import read_truth, simulate, write_simulation
from .tis import CorrMethod, DetectorParams

log = logging.getLogger("congestloc")

EXIT_OK, EXIT_WARN, EXIT_FATAL = 0, 1, 2


class FatalInput(Exception):
    pass


def _write_manifest(out: Path, command: str, params: dict, inputs: dict[str, Path], outputs: list[Path]) -> None:
    manifest = {
        "tool": "congestloc",
        "version": __version__,
        "command": command,
        "params": params,
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
        "outputs": {p.name: sha256_file(p) for p in sorted(outputs)},
    }
    with atomic_text(out / "manifest.json") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write(path: Path, writer, *args) -> Path:
    with atomic_text(path) as fh:
        writer(fh, *args)
    return path


def _rc_params(args) -> RcParams:
    try:
        return RcParams(args.q, args.t)
    except ValueError as exc:
        raise FatalInput(str(exc)) from exc


def _detector_params(args) -> DetectorParams:
    try:
        return DetectorParams(
            corr_threshold=args.corr_threshold,
            count_threshold=args.count_threshold,
            min_cycles=args.min_cycles,
            pairing_window_s=args.pairing_window_s,
            min_pairs_per_site=args.min_pairs_per_site,
            corr_method=CorrMethod(args.corr_method.upper()),
        )
    except ValueError as exc:
        raise FatalInput(str(exc)) from exc


def _params_dict(obj) -> dict:
    d = dataclasses.asdict(obj)
    return {k: (v.value if hasattr(v, "value") else v) for k, v in d.items()}


# -- ingest -------------------------------------------------------------------

def _input_paths(args) -> dict[Schema, Path]:
    base = Path(args.input) if args.input else None
    paths = {}
    for schema, opt in ((Schema.BENCHMARK, args.benchmark), (Schema.WEBSITE, args.website),
                        (Schema.CONNECTIONS, args.connections)):
        if opt:
            paths[schema] = Path(opt)
        elif base is not None:
            paths[schema] = base / FILENAMES[schema]
        else:
            raise FatalInput(f"no {FILENAMES[schema]} given (use --input DIR or --{schema.value.lower()})")
        if not paths[schema].is_file():
            raise FatalInput(f"{paths[schema]}: no such file")
    return paths


def cmd_ingest(args) -> int:
    paths = _input_paths(args)
    out = Path(args.out)
    try:
        conns, rejects = ingest_path(paths[Schema.CONNECTIONS], Schema.CONNECTIONS)
        units = {c.unit_id for c in conns}
        bench, r = ingest_path(paths[Schema.BENCHMARK], Schema.BENCHMARK, units)
        rejects += r
        web, r = ingest_path(paths[Schema.WEBSITE], Schema.WEBSITE, units)
        rejects += r
    except IngestError as exc:
        raise FatalInput(str(exc)) from exc

    conns.sort(key=lambda c: c.unit_id)
    bench.sort(key=lambda b: (b.unit_id, b.start_time))
    web.sort(key=lambda f: (f.unit_id, f.start_time, f.site_id))
    outputs = []
    for schema, recs in ((Schema.CONNECTIONS, conns), (Schema.BENCHMARK, bench), (Schema.WEBSITE, web)):
        outputs.append(_write(out / FILENAMES[schema], write_records, recs, schema))
    outputs.append(_write(out / "rejects.csv", write_rejects, rejects))
    _write_manifest(out, "ingest", {}, {FILENAMES[s]: p for s, p in paths.items()}, outputs)
    log.info("ingested %d connections, %d benchmark runs, %d website fetches; %d rejects",
             len(conns), len(bench), len(web), len(rejects))
    return EXIT_OK


# -- analyze ------------------------------------------------------------------

def _load_store(store: Path, technology: str | None):
    paths = {s: store / FILENAMES[s] for s in Schema}
    for p in paths.values():
        if not p.is_file():
            raise FatalInput(f"{p}: no such file (run 'ingest' first)")
    try:
        conns, rejects = ingest_path(paths[Schema.CONNECTIONS], Schema.CONNECTIONS)
        bench, r1 = ingest_path(paths[Schema.BENCHMARK], Schema.BENCHMARK)
        web, r2 = ingest_path(paths[Schema.WEBSITE], Schema.WEBSITE)
    except IngestError as exc:
        raise FatalInput(str(exc)) from exc
    rejects = rejects + r1 + r2
    if technology:
        conns = [c for c in conns if c.technology.value == technology]
    units = {c.unit_id for c in conns}
    records = [x for x in (*bench, *web) if x.unit_id in units]
    months, r3 = group_by_month(records, conns)
    return months, rejects + r3, paths


def _write_tables(out: Path, results, group_by: GroupBy, anonymize_ids: bool = False) -> list[Path]:
    summaries = summarize(results, group_by)
    if anonymize_ids:
        summaries = anonymize(summaries)
    prevalence = [*prevalence_series(summaries, Metric.RC), *prevalence_series(summaries, Metric.TIS)]
    prevalence.sort(key=lambda r: (r.isp_id, r.year_month, r.metric.value))
    return [
        _write(out / "summary.csv", write_summary, summaries),
        _write(out / "prevalence.csv", write_prevalence, prevalence),
    ]


def cmd_analyze(args) -> int:
    rc_params = _rc_params(args)
    detector = _detector_params(args)
    store = Path(args.store)
    out = Path(args.out)
    months, rejects, inputs = _load_store(store, args.technology)
    if rejects:
        log.warning("%d records in the store were rejected", len(rejects))
    results, excluded = analyze(months, rc_params, detector, args.min_days)
    outputs = [
        _write(out / "verdicts.csv", write_verdicts, results),
        _write(out / "rc.csv", write_rc, results),
        _write(out / "exclusions.csv", write_exclusions, excluded),
        *_write_tables(out, results, GroupBy(args.group_by.upper())),
    ]
    params = {
        "rc": _params_dict(rc_params),
        "detector": _params_dict(detector),
        "min_days": args.min_days,
        "technology": args.technology,
        "group_by": args.group_by.upper(),
    }
    _write_manifest(out, "analyze", params, {p.name: p for p in inputs.values()}, outputs)
    n_eligible = sum(r.tis.eligible for r in results)
    if n_eligible == 0:
        log.warning("no eligible connection-months; outputs are empty")
    log.info("%d connection-months analysed, %d eligible, %d excluded", len(results), n_eligible, len(excluded))
    return EXIT_OK


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    try:
        text, source = scenario_text(args.scenario)
        scenario = parse_scenario(text, source)
    except ScenarioError as exc:
        raise FatalInput(f"scenario: {exc}") from exc
    if args.seed is not None:
        if args.seed < 0:
            raise FatalInput("--seed must be non-negative")
        text = _override_seed(text, args.seed)
        scenario = parse_scenario(text, source)
    out = Path(args.out)
    result = simulate(scenario)
    paths = write_simulation(result, out)
    with atomic_text(out / "scenario.ini") as fh:
        fh.write(text)
    params = {"scenario": scenario.name, "seed": scenario.seed, "months": scenario.months}
    _write_manifest(out, "simulate", params, {"scenario.ini": out / "scenario.ini"}, list(paths.values()))
    log.info("simulated %d connections over %s", len(result.connections), ", ".join(scenario.months))
    return EXIT_OK


def _override_seed(text: str, seed: int) -> str:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)
    cp["scenario"]["seed"] = str(seed)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- evaluate -----------------------------------------------------------------

def _read_analysis(analysis: Path):
    files = {name: analysis / name for name in ("verdicts.csv", "rc.csv", "exclusions.csv")}
    for p in files.values():
        if not p.is_file():
            raise FatalInput(f"{p}: no such file (run 'analyze' first)")
    try:
        with open(files["verdicts.csv"], encoding="utf-8") as fh:
            verdicts = read_verdicts(fh)
        with open(files["rc.csv"], encoding="utf-8") as fh:
            rc = read_rc(fh)
        with open(files["exclusions.csv"], encoding="utf-8") as fh:
            excluded = read_exclusions(fh)
        results = join_results(verdicts, rc)
    except (ValueError, KeyError) as exc:
        raise FatalInput(f"{analysis}: {exc}") from exc
    return results, excluded, files


def cmd_evaluate(args) -> int:
    results, excluded, inputs = _read_analysis(Path(args.analysis))
    truth_path = Path(args.truth)
    if not truth_path.is_file():
        raise FatalInput(f"{truth_path}: no such file")
    try:
        with open(truth_path, encoding="utf-8") as fh:
            truth = read_truth(fh)
    except (ValueError, KeyError) as exc:
        raise FatalInput(f"{truth_path}: {exc}") from exc
    out = Path(args.out)

    skip = {e.key for e in excluded} | {r.key for r in results if not r.tis.eligible}
    rows: dict[str, Confusion] = {}
    try:
        rows["tis"] = evaluate({r.key: r.tis.tight for r in results}, {g.key: g.tis_true for g in truth}, skip)
        rows["rc"] = evaluate({r.key: r.rc.congested for r in results}, {g.key: g.rc_true for g in truth}, skip)
    except KeyMismatchError as exc:
        print(f"congestloc: key mismatch; orphan unit_ids: {' '.join(exc.orphan_units)}", file=sys.stderr)
        return EXIT_FATAL
    inputs = {**{p.name: p for p in inputs.values()}, "truth.csv": truth_path}
    outputs = [_write(out / "confusion.csv", write_confusion, rows)]
    _write_manifest(out, "evaluate", {}, inputs, outputs)
    for target, c in rows.items():
        print(f"{target}: TP={c.tp} FP={c.fp} TN={c.tn} FN={c.fn} "
              f"TPR={_rate(c.tpr)} FNR={_rate(c.fnr)} FPR={_rate(c.fpr)}")
    if rows["tis"].n == 0:
        log.warning("no eligible connection-months to score")
        return EXIT_WARN
    return EXIT_OK


def _rate(x: float | None) -> str:
    return "undefined" if x is None else f"{x:.3f}"


# -- report -------------------------------------------------------------------

def cmd_report(args) -> int:
    results, _, inputs = _read_analysis(Path(args.analysis))
    if args.technology:
        results = [r for r in results if r.technology == args.technology]
    out = Path(args.out)
    group_by = GroupBy(args.group_by.upper())
    outputs = _write_tables(out, results, group_by, args.anonymize)
    summaries = summarize(results, group_by)
    if args.anonymize:
        summaries = anonymize(summaries)
    if args.plots:
        for tech in sorted({s.technology for s in summaries}):
            sub = [s for s in summaries if s.technology == tech]
            for metric in Metric:
                path = out / f"prevalence_{metric.value.lower()}_{tech.lower()}.svg"
                label = "recurrent congestion" if metric is Metric.RC else "tight initial segment"
                plot_prevalence(prevalence_series(sub, metric), path, f"{label} prevalence, {tech}")
                outputs.append(path)
    params = {"group_by": group_by.value, "technology": args.technology, "anonymize": args.anonymize,
              "plots": args.plots}
    _write_manifest(out, "report", params, {p.name: p for p in inputs.values()}, outputs)
    if not summaries:
        log.warning("no eligible connection-months; report is empty")
        return EXIT_WARN
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    d = DetectorParams()
    g = p.add_argument_group("thresholds")
    g.add_argument("--q", type=float, default=0.8, help="fraction of tier (default 0.8)")
    g.add_argument("--t", type=float, default=0.2, help="fraction of samples (default 0.2)")
    g.add_argument("--corr-threshold", type=float, default=d.corr_threshold)
    g.add_argument("--count-threshold", type=int, default=d.count_threshold)
    g.add_argument("--min-cycles", type=int, default=d.min_cycles)
    g.add_argument("--pairing-window-s", type=int, default=d.pairing_window_s)
    g.add_argument("--min-pairs-per-site", type=int, default=d.min_pairs_per_site)
    g.add_argument("--corr-method", choices=["pearson", "spearman", "PEARSON", "SPEARMAN"], default="pearson")
    g.add_argument("--min-days", type=int, default=MIN_TIER_DAYS, help="days needed to infer a tier")


_TECH = [t.value for t in Technology]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="congestloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate measurement CSVs into a normalized store")
    p.add_argument("--input", help="directory holding benchmark.csv, website.csv, connections.csv")
    p.add_argument("--benchmark")
    p.add_argument("--website")
    p.add_argument("--connections")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="recurrent congestion and TIS verdicts per connection-month")
    p.add_argument("--store", required=True, help="directory written by 'ingest'")
    p.add_argument("--out", required=True)
    p.add_argument("--technology", choices=_TECH)
    p.add_argument("--group-by", choices=["isp", "technology", "all", "ISP", "TECHNOLOGY", "ALL"], default="isp")
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="generate measurements from a scenario")
    p.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score verdicts against simulator ground truth")
    p.add_argument("--analysis", required=True, help="directory written by 'analyze'")
    p.add_argument("--truth", required=True, help="truth.csv written by 'simulate'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="prevalence tables and plots from an analysis")
    p.add_argument("--analysis", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--technology", choices=_TECH)
    p.add_argument("--group-by", choices=["isp", "technology", "all", "ISP", "TECHNOLOGY", "ALL"], default="isp")
    p.add_argument("--anonymize", action="store_true", help="relabel ISPs as isp_01, isp_02, ...")
    p.add_argument("--plots", action="store_true", help="also write SVG bar charts")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="congestloc: %(levelname)s: %(message)s")
    try:
        return args.func(args)
    except FatalInput as exc:
        print(f"congestloc: error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
