"""Tight-initial-segment detection by benchmark/website correlation.

Benchmark runs and website fetches are never simultaneous, so each benchmark
is paired with a nearby fetch of every site, one correlation is computed per
site, and a month is flagged when enough of them are high. Website series
are only ever correlated against the benchmark, never against each other.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .metrics import MIN_TIER_DAYS, require_tier, sustained_throughput
from .model import SITES, ConnectionMonth, WebsiteFetch


class CorrMethod(str, enum.Enum):
    PEARSON = "PEARSON"
    SPEARMAN = "SPEARMAN"


@dataclass(frozen=True)
class DetectorParams:
    corr_threshold: float = 0.6
    count_threshold: int = 5
    min_cycles: int = 180
    pairing_window_s: int = 3600
    min_pairs_per_site: int = 30
    corr_method: CorrMethod = CorrMethod.PEARSON

    def __post_init__(self):
        object.__setattr__(self, "corr_method", CorrMethod(self.corr_method))
        if not 0.0 <= self.corr_threshold <= 1.0:
            raise ValueError("corr_threshold must lie in [0, 1]")
        if not 1 <= self.count_threshold <= len(SITES):
            raise ValueError(f"count_threshold must lie in [1, {len(SITES)}]")
        if self.min_cycles < 0 or self.pairing_window_s < 0:
            raise ValueError("min_cycles and pairing_window_s must be non-negative")
        if self.min_pairs_per_site < 2:
            raise ValueError("min_pairs_per_site must be at least 2")


class Pair(NamedTuple):
    run_index: int
    benchmark_time: int
    fetch_time: int
    benchmark_bps: float
    website_bps: float


@dataclass(frozen=True)
class PairedSeries:
    site_id: str
    pairs: tuple[Pair, ...]

    @property
    def n(self) -> int:
        return len(self.pairs)

    def margins(self) -> tuple[np.ndarray, np.ndarray]:
        xs = np.fromiter((p.benchmark_bps for p in self.pairs), dtype=float, count=self.n)
        ys = np.fromiter((p.website_bps for p in self.pairs), dtype=float, count=self.n)
        return xs, ys


@dataclass(frozen=True)
class TisVerdict:
    correlations: dict[str, float | None]
    high_count: int
    tight: bool
    eligible: bool
    matched_cycles: int


def website_speed(fetch: WebsiteFetch) -> float:
    """Download speed of a website fetch.

    Bits per second when the byte count is known, otherwise the reciprocal
    of the download time as a unitless speed proxy.
    """
    if not fetch.total_time_s > 0:
        raise ValueError("non-positive download time")
    if fetch.total_bytes is not None:
        return fetch.total_bytes * 8 / fetch.total_time_s
    return 1.0 / fetch.total_time_s


class _FreeSlots:
    """Nearest unused index to the left/right, with path-compressed skips."""

    def __init__(self, n: int):
        self.n = n
        self._left = list(range(n))
        self._right = list(range(n))

    @staticmethod
    def _find(parent: list[int], i: int) -> int:
        root = i
        while 0 <= root < len(parent) and parent[root] != root:
            root = parent[root]
        while 0 <= i < len(parent) and parent[i] != i:
            parent[i], i = root, parent[i]
        return root

    def left_of(self, i: int) -> int:
        return self._find(self._left, i) if i >= 0 else -1

    def right_of(self, i: int) -> int:
        return self._find(self._right, i) if i < self.n else self.n

    def take(self, i: int) -> None:
        self._left[i] = i - 1
        self._right[i] = i + 1


def _nearest_unmatched(times: list[int], free: _FreeSlots, t: int, window: int) -> int | None:
    i = bisect.bisect_left(times, t)
    left = free.left_of(i - 1)
    right = free.right_of(i)
    best = None
    if left >= 0 and t - times[left] <= window:
        best = left
    if right < len(times) and times[right] - t <= window:
        # ties go to the earlier fetch
        if best is None or times[right] - t < t - times[left]:
            best = right
    return best


def pair_measurements(cm: ConnectionMonth, params: DetectorParams = DetectorParams()) -> dict[str, PairedSeries]:
    """Greedily pair each benchmark with the nearest unused fetch of each site.

    Benchmarks are processed in chronological order. A fetch is used at most
    once. Every canonical site is present in the result, possibly empty.
    """
    runs = sorted(enumerate(cm.benchmark_runs), key=lambda ir: ir[1].start_time)
    by_site: dict[str, list[WebsiteFetch]] = {s: [] for s in SITES}
    for f in cm.website_fetches:
        by_site[f.site_id].append(f)

    out = {}
    for site in SITES:
        fetches = sorted(by_site[site], key=lambda f: f.start_time)
        times = [f.start_time for f in fetches]
        free = _FreeSlots(len(fetches))
        pairs = []
        for idx, run in runs:
            j = _nearest_unmatched(times, free, run.start_time, params.pairing_window_s)
            if j is None:
                continue
            free.take(j)
            pairs.append(Pair(idx, run.start_time, times[j], sustained_throughput(run), website_speed(fetches[j])))
        out[site] = PairedSeries(site, tuple(pairs))
    return out


def matched_cycles(pairings: dict[str, PairedSeries]) -> int:
    """Number of benchmark runs paired with at least one site."""
    return len({p.run_index for s in pairings.values() for p in s.pairs})


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Sample Pearson coefficient, or ``None`` if either margin is constant."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("margins must be 1-d and of equal length")
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    den = math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    if not den > 0 or not math.isfinite(den):
        return None
    r = float(np.dot(dx, dy)) / den
    return max(-1.0, min(1.0, r))


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Pearson coefficient on average ranks (ties share their mean rank)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size < 2:
        return None
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def correlation(series: PairedSeries, method: CorrMethod = CorrMethod.PEARSON, min_pairs: int = 2) -> float | None:
    if series.n < max(2, min_pairs):
        return None
    xs, ys = series.margins()
    if CorrMethod(method) is CorrMethod.SPEARMAN:
        return spearman(xs, ys)
    return pearson(xs, ys)


def classify(correlations: dict[str, float | None], cycles: int, params: DetectorParams = DetectorParams()) -> TisVerdict:
    high = sum(1 for r in correlations.values() if r is not None and r > params.corr_threshold)
    eligible = cycles >= params.min_cycles
    return TisVerdict(
        correlations=dict(correlations),
        high_count=high,
        tight=eligible and high >= params.count_threshold,
        eligible=eligible,
        matched_cycles=cycles,
    )


def detect_tis(
    cm: ConnectionMonth,
    params: DetectorParams = DetectorParams(),
    min_days: int = MIN_TIER_DAYS,
    check_tier: bool = True,
) -> TisVerdict:
    """Classify a connection-month as having a tight initial segment or not.

    Months whose tier changed or cannot be inferred are excluded the same way
    as for recurrent congestion, unless ``check_tier`` is false.
    """
    if check_tier:
        require_tier(cm, min_days)
    pairings = pair_measurements(cm, params)
    corrs = {s: correlation(pairings[s], params.corr_method, params.min_pairs_per_site) for s in SITES}
    return classify(corrs, matched_cycles(pairings), params)
