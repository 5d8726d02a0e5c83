"""Synthetic measurement generator with planted bottlenecks.

Every connection is measured on a fixed-cadence grid with a random per-unit
offset. At each sample time the benchmark path and the ten website paths
are evaluated against the same link processes, so the emitted measurements
and the ground-truth labels come from one set of link states.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from ._io import atomic_text
from .metrics import CANONICAL_RC, recurrent_congestion
from .model import (
    INTERVAL_S,
    N_INTERVALS,
    SITES,
    BenchmarkRun,
    Connection,
    Schema,
    WebsiteFetch,
    write_records,
    year_month,
)
from .scenario import LinkProcess, Scenario, SimConnection, substream


@dataclass(frozen=True)
class GroundTruth:
    unit_id: str
    year_month: str
    tight_fraction: float
    tis_true: bool
    rc_true: bool

    @property
    def key(self) -> tuple[str, str]:
        return (self.unit_id, self.year_month)


@dataclass(frozen=True)
class SimulationResult:
    benchmark: list[BenchmarkRun]
    website: list[WebsiteFetch]
    connections: list[Connection]
    truth: list[GroundTruth]


def _shares(path: Sequence[LinkProcess], t: np.ndarray) -> np.ndarray:
    return np.stack([np.broadcast_to(link.share(t), np.shape(t)) for link in path])


def _throughput(shares: np.ndarray, sigmas: np.ndarray, z: np.ndarray, tier: float):
    """Noisy, tier-capped throughput plus the index of the binding link."""
    binding = shares.argmin(axis=0)
    floor = np.take_along_axis(shares, binding[None], axis=0)[0]
    return np.minimum(floor * np.exp(sigmas[binding] * z), tier), binding


def _initial_tight(shares: np.ndarray, tier: float) -> np.ndarray:
    # Row 0 is the initial segment. It is tight when no other link is
    # narrower and it, not the contractual tier, limits the path.
    return (shares[0] <= shares.min(axis=0)) & (shares[0] < tier)


def path_throughput(
    path: Sequence[LinkProcess],
    t: int,
    tier_bps: float,
    rng: np.random.Generator | None = None,
) -> float:
    """Throughput of one flow over ``path`` at time ``t``.

    The narrowest link's available share, times lognormal noise drawn with
    that link's sigma (skipped when ``rng`` is None), capped at the tier.
    """
    if not path:
        raise ValueError("empty path")
    shares = _shares(path, np.asarray([t]))
    sigmas = np.array([link.noise_sigma for link in path])
    z = rng.standard_normal(1) if rng is not None else np.zeros(1)
    x, _ = _throughput(shares, sigmas, z, tier_bps)
    return float(x[0])


def sample_times(scenario: Scenario, offset: int) -> np.ndarray:
    return np.arange(scenario.start + offset, scenario.end, scenario.cadence_s, dtype=np.int64)


def _simulate_connection(sc: Scenario, c: SimConnection):
    rng = substream(sc.seed, "unit:" + c.unit_id)
    offset = int(rng.integers(0, sc.cadence_s))
    times = sample_times(sc, offset)
    n = times.size
    tier = c.tier_bps
    z_bench = rng.standard_normal(n)
    z_web = rng.standard_normal((n, len(SITES)))
    miss_bench = rng.random(n) < sc.missing_prob
    miss_web = rng.random((n, len(SITES))) < sc.missing_prob

    bpath = sc.benchmark_path(c)
    bshares = _shares(bpath, times)
    bench, _ = _throughput(bshares, np.array([lk.noise_sigma for lk in bpath]), z_bench, tier)
    tight = _initial_tight(bshares, tier)

    web_times = times[:, None] + sc.website_delay_s + sc.site_spacing_s * np.arange(len(SITES))[None, :]
    web = np.empty((n, len(SITES)))
    for k, site in enumerate(SITES):
        wpath = sc.website_path(c, site)
        wshares = _shares(wpath, web_times[:, k])
        web[:, k], _ = _throughput(wshares, np.array([lk.noise_sigma for lk in wpath]), z_web[:, k], tier)
        tight |= _initial_tight(wshares, tier)

    final = np.rint(bench * INTERVAL_S / 8).astype(np.int64)
    burst = np.rint(bench * c.powerboost * INTERVAL_S / 8).astype(np.int64)
    runs = [
        BenchmarkRun(c.unit_id, int(t), (int(b), int(b)) + (int(f),) * (N_INTERVALS - 2))
        for t, b, f, miss in zip(times, burst, final, miss_bench)
        if not miss
    ]
    page_bits = sc.page_bytes * 8
    fetches = [
        WebsiteFetch(c.unit_id, int(web_times[i, k]), site, page_bits / float(web[i, k]), sc.page_bytes)
        for i in range(n)
        for k, site in enumerate(SITES)
        if not miss_web[i, k]
    ]

    sustained = final * 8 / INTERVAL_S
    months = np.array([year_month(int(t)) for t in times])
    truth = []
    for ym in sorted(set(months)):
        sel = months == ym
        frac = float(np.count_nonzero(tight[sel])) / int(np.count_nonzero(sel))
        rc = recurrent_congestion(sustained[sel], tier, CANONICAL_RC)
        truth.append(GroundTruth(c.unit_id, str(ym), frac, frac >= sc.tau, rc.congested))
    return runs, fetches, truth


def simulate(scenario: Scenario) -> SimulationResult:
    """Generate measurements and ground truth for every connection.

    Each connection draws from its own random substream keyed by
    (seed, unit_id), so output does not depend on processing order.
    """
    bench: list[BenchmarkRun] = []
    web: list[WebsiteFetch] = []
    truth: list[GroundTruth] = []
    for c in scenario.connections:
        r, f, g = _simulate_connection(scenario, c)
        bench.extend(r)
        web.extend(f)
        truth.extend(g)
    return SimulationResult(bench, web, [c.connection for c in scenario.connections], truth)


TRUTH_COLUMNS = ("unit_id", "year_month", "tight_fraction", "tis_true", "rc_true")


def _flag(b: bool) -> str:
    return "true" if b else "false"


def write_truth(out: IO[str], truth: Sequence[GroundTruth]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRUTH_COLUMNS)
    for g in truth:
        w.writerow([g.unit_id, g.year_month, repr(g.tight_fraction), _flag(g.tis_true), _flag(g.rc_true)])


def read_truth(source: IO[str]) -> list[GroundTruth]:
    reader = csv.DictReader(source)
    if tuple(reader.fieldnames or ()) != TRUTH_COLUMNS:
        raise ValueError(f"truth file header {reader.fieldnames} does not match {list(TRUTH_COLUMNS)}")
    return [
        GroundTruth(row["unit_id"], row["year_month"], float(row["tight_fraction"]),
                    row["tis_true"] == "true", row["rc_true"] == "true")
        for row in reader
    ]


def write_simulation(result: SimulationResult, outdir: Path) -> dict[str, Path]:
    outdir = Path(outdir)
    paths = {}
    for name, records, schema in (
        ("benchmark.csv", result.benchmark, Schema.BENCHMARK),
        ("website.csv", result.website, Schema.WEBSITE),
        ("connections.csv", result.connections, Schema.CONNECTIONS),
    ):
        paths[name] = outdir / name
        with atomic_text(paths[name]) as fh:
            write_records(fh, records, schema)
    paths["truth.csv"] = outdir / "truth.csv"
    with atomic_text(paths["truth.csv"]) as fh:
        write_truth(fh, result.truth)
    return paths
