"""Acceptance suite: one test per primary criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The simulator-backed criteria share one pipeline run per bundled scenario.
"""

import csv
import io
import json
import time
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np
import pytest

from congestloc.cli import main
from congestloc.metrics import RcParams, infer_tier, recurrent_congestion
from congestloc.model import SITES, BenchmarkRun
from congestloc.report import percent
from congestloc.tis import Pair, PairedSeries, classify, correlation, pearson, spearman

from conftest import DATA, month_of, record_criterion, ts

pytestmark = pytest.mark.acceptance


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _check(name: str, ok: bool, detail: str) -> None:
    record_criterion(name, ok, detail)
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, detail


def run_pipeline(scenario: str, root: Path) -> dict:
    """simulate -> ingest -> analyze -> evaluate -> report, with timings."""
    d = {k: root / k for k in ("sim", "store", "analysis", "eval", "report")}
    t0 = time.perf_counter()
    codes = [
        main(["simulate", "--scenario", scenario, "--out", str(d["sim"])]),
        main(["ingest", "--input", str(d["sim"]), "--out", str(d["store"])]),
        main(["analyze", "--store", str(d["store"]), "--out", str(d["analysis"])]),
    ]
    out = io.StringIO()
    with redirect_stdout(out):
        codes.append(main(["evaluate", "--analysis", str(d["analysis"]), "--truth", str(d["sim"] / "truth.csv"),
                           "--out", str(d["eval"])]))
    codes.append(main(["report", "--analysis", str(d["analysis"]), "--out", str(d["report"]),
                       "--group-by", "technology"]))
    elapsed = time.perf_counter() - t0
    confusion = {r["target"]: r for r in _rows(d["eval"] / "confusion.csv")}
    return {"dirs": d, "codes": codes, "elapsed": elapsed, "confusion": confusion, "stdout": out.getvalue()}


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_pipeline(name, tmp_path_factory.mktemp(name))
        return cache[name]

    return get


def test_c1_table_arithmetic():
    t0 = time.perf_counter()
    with open(DATA / "prevalence_tables.csv") as fh:
        rows = list(csv.DictReader(fh))
    cells = {"pct_fc": ("fc", "total"), "pct_ptis": ("ptis", "total"),
             "pct_inter_over_ptis": ("fc_and_ptis", "ptis"), "pct_inter_over_fc": ("fc_and_ptis", "fc")}
    mismatches, n = [], 0
    for r in rows:
        for col, (num, den) in cells.items():
            n += 1
            got = percent(int(r[num]), int(r[den]))
            if got != int(r[col]):
                mismatches.append(f"{r['technology']} {r['year_month']} {col}: {r[num]}/{r[den]} -> {got}, "
                                  f"expected {r[col]}")
    elapsed = time.perf_counter() - t0
    detail = f"{n - len(mismatches)}/{n} cells match in {elapsed:.3f}s"
    if mismatches:
        detail += "; mismatched: " + "; ".join(mismatches)
    _check("C1 table arithmetic", not mismatches and elapsed < 1.0, detail)


def test_c2_rc_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20110301)
    bad_count = bad_q = bad_t = 0
    for _ in range(1000):
        n = int(rng.integers(1, 1001))
        tier = float(rng.uniform(1e6, 1e8))
        xs = rng.uniform(0, 1.2 * tier, n)
        q, t = (float(v) for v in rng.random(2))
        v = recurrent_congestion(xs, tier, RcParams(q, t))
        below = sum(1 for x in xs.tolist() if x / tier < q)
        bad_count += v.below_fraction != below / n or v.congested != (below / n > t)
        q2, t2 = float(rng.uniform(q, 1)), float(rng.uniform(t, 1))
        bad_q += recurrent_congestion(xs, tier, RcParams(q2, t)).below_fraction < v.below_fraction
        bad_t += recurrent_congestion(xs, tier, RcParams(q, t2)).congested and not v.congested
    elapsed = time.perf_counter() - t0
    ok = bad_count == bad_q == bad_t == 0 and elapsed < 10
    _check("C2 recurrent-congestion oracle", ok,
           f"recount mismatches={bad_count}, q-monotonicity violations={bad_q}, "
           f"t-monotonicity violations={bad_t}, {elapsed:.2f}s")


def _synthetic_month(rng, tiers_by_day, per_day=12, sigma=0.1):
    start = ts("2011-03-01T00:00:00Z")
    runs = []
    for d, tier in enumerate(tiers_by_day):
        for k in range(per_day):
            x = tier * float(np.exp(sigma * rng.standard_normal()))
            b = round(x * 5 / 8)
            runs.append(BenchmarkRun("u1", start + d * 86400 + k * 7200, (b,) * 6))
    return month_of(runs)


def test_c3_tier_change_detection():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20110303)
    days = 30
    detected = 0
    for _ in range(500):
        t1 = float(rng.uniform(1e6, 50e6))
        d = int(rng.integers(8, 23))  # first day of the new tier
        k = float(rng.uniform(0.6, 1.0))  # step size relative to the month's mean tier
        # solve |t2 - t1| = k * (d*t1 + (days-d)*t2) / days for t2
        if rng.random() < 0.5:
            t2 = t1 * (1 + k * d / days) / (1 - k * (days - d) / days)
        else:
            t2 = t1 * (1 - k * d / days) / (1 + k * (days - d) / days)
        est = infer_tier(_synthetic_month(rng, [t1] * d + [t2] * (days - d)))
        detected += est.changed
    false_changes = 0
    for _ in range(500):
        tier = float(rng.uniform(1e6, 50e6))
        false_changes += infer_tier(_synthetic_month(rng, [tier] * days)).changed
    elapsed = time.perf_counter() - t0
    ok = detected == 500 and false_changes / 500 <= 0.05 and elapsed < 30
    _check("C3 tier-change detection", ok,
           f"detection {detected}/500, false changes {false_changes}/500, {elapsed:.1f}s")


def test_c4_correlation_units():
    fixtures = [
        ([1, 2, 3, 4, 5], [2, 4, 6, 8, 10], 1.0),
        ([1, 2, 3, 4, 5], [-1, -2, -3, -4, -5], -1.0),
        ([1, 2, 3, 4, 5], [2, 1, 4, 3, 5], 0.8),
        ([1, 2, 3], [1, 3, 2], 0.5),
        ([0, 1, 2, 3], [0, 1, 0, 1], 1 / 5 ** 0.5),
    ]
    errors = [abs(pearson(x, y) - r) for x, y, r in fixtures]
    undefined = [pearson([1, 2, 3], [5, 5, 5]), pearson([2, 2], [1, 3]), spearman([4, 4, 4], [1, 2, 3])]
    flat = PairedSeries("cnn.com", tuple(Pair(i, i, i, 5e6, float(i + 1)) for i in range(40)))
    v = classify({s: correlation(flat, min_pairs=30) for s in SITES}, 300)
    verdict_clean = (v.high_count == 0 and not v.tight
                     and all(c is None for c in v.correlations.values()))
    ok = max(errors) <= 1e-12 and all(u is None for u in undefined) and verdict_clean
    _check("C4 correlation unit checks", ok,
           f"max |error|={max(errors):.1e} over {len(fixtures)} fixtures, "
           f"zero-variance -> {undefined}, verdict without NaN={verdict_clean}")


def test_c5_planted_initial_segment(runs):
    r = runs("initial-bottleneck")
    c = r["confusion"]["tis"]
    tpr = float(c["tpr"]) if c["tpr"] else 0.0
    ok = tpr >= 0.90 and r["elapsed"] < 120 and r["codes"][:4] == [0, 0, 0, 0]
    _check("C5 planted initial segment", ok,
           f"TPR={tpr:.3f} (TP={c['tp']} FN={c['fn']} of n={c['n']}), pipeline {r['elapsed']:.1f}s")


def test_c6_website_edge(runs):
    r = runs("website-edge")
    c = r["confusion"]["tis"]
    fpr = float(c["fpr"]) if c["fpr"] else float("nan")
    ok = fpr <= 0.05
    _check("C6 website-edge false positives", ok, f"FPR={fpr:.3f} (FP={c['fp']} TN={c['tn']} of n={c['n']})")


def test_c7_middle_mile_failure_mode(runs):
    r = runs("middle-mile")
    c = r["confusion"]["tis"]
    report = r["dirs"]["eval"] / "confusion.csv"
    fpr = float(c["fpr"]) if c["fpr"] else 0.0
    surfaced = "FPR=" in r["stdout"] and f"FPR={fpr:.3f}" in r["stdout"]
    ok = report.is_file() and fpr > 0 and surfaced
    _check("C7 middle-mile failure mode", ok,
           f"FPR={fpr:.3f} (FP={c['fp']} TN={c['tn']}), written to confusion.csv and printed={surfaced}")


def test_c8_two_population_ordering(runs):
    r = runs("two-population")
    by_tech = {row["technology"]: row for row in _rows(r["dirs"]["report"] / "summary.csv")}
    ratios = {t: int(row["fc_and_ptis"]) / int(row["fc"]) for t, row in by_tech.items() if int(row["fc"])}
    dsl, cable = ratios.get("DSL", 0.0), ratios.get("CABLE", 0.0)
    gap = dsl / cable if cable else float("inf")
    ok = dsl > cable and gap >= 3 and r["elapsed"] < 300
    _check("C8 two-population ordering", ok,
           f"FC&PTIS/FC DSL={dsl:.3f} CABLE={cable:.3f} gap={gap:.1f}x, pipeline {r['elapsed']:.1f}s")


def test_c9_end_to_end_determinism(runs, tmp_path_factory):
    first = runs("initial-bottleneck")
    second = run_pipeline("initial-bottleneck", tmp_path_factory.mktemp("rerun"))
    compared, differing = 0, []
    for stage, d in first["dirs"].items():
        for p in sorted(d.iterdir()):
            if p.suffix in (".csv", ".json"):
                compared += 1
                if (second["dirs"][stage] / p.name).read_bytes() != p.read_bytes():
                    differing.append(f"{stage}/{p.name}")
    manifests = [json.loads((d / "manifest.json").read_text()) for d in first["dirs"].values()]
    ok = compared > 0 and not differing and all(m["outputs"] for m in manifests)
    _check("C9 end-to-end determinism", ok,
           f"{compared} CSV/manifest files compared, {len(differing)} differ {differing}")
