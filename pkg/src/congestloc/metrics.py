"""Throughput metrics for one connection-month.

Sustained throughput, speed-tier inference with tier-change detection, and
(q, t)-recurrent congestion.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import INTERVAL_S, BenchmarkRun, ConnectionMonth, day_key

MIN_TIER_DAYS = 15
TIER_CHANGE_SPREAD = 0.5


class ExcludedMonth(Exception):
    """A connection-month that cannot be analysed."""

    reason = "excluded"


class TierChanged(ExcludedMonth):
    reason = "tier changed"


class TierUndetermined(ExcludedMonth):
    reason = "tier undetermined"


@dataclass(frozen=True)
class RcParams:
    q: float = 0.8
    t: float = 0.2

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0 and 0.0 <= self.t <= 1.0):
            raise ValueError(f"q and t must lie in [0, 1], got ({self.q}, {self.t})")


CANONICAL_RC = RcParams(0.8, 0.2)


@dataclass(frozen=True)
class RcVerdict:
    below_fraction: float
    congested: bool
    n_samples: int
    tier_bps: float


@dataclass(frozen=True)
class TierEstimate:
    changed: bool
    tier_bps: float | None
    daily_maxima: dict[str, float]


def sustained_throughput(run: BenchmarkRun) -> float:
    """Rate over the final 5-second interval, in bits per second.

    Earlier intervals are ignored so burst features such as PowerBoost do
    not inflate the figure.
    """
    return run.interval_bytes[-1] * 8 / INTERVAL_S


def daily_maxima(cm: ConnectionMonth) -> dict[str, float]:
    offset = cm.connection.utc_offset_s
    maxima: dict[str, float] = {}
    for run in cm.benchmark_runs:
        day = day_key(run.start_time, offset)
        x = sustained_throughput(run)
        if day not in maxima or x > maxima[day]:
            maxima[day] = x
    return dict(sorted(maxima.items()))


def infer_tier(cm: ConnectionMonth, min_days: int = MIN_TIER_DAYS) -> TierEstimate:
    """Estimate the speed tier from daily maxima of sustained throughput.

    The tier counts as changed when the spread between the largest and
    smallest daily maximum exceeds half their mean. Raises
    :class:`TierUndetermined` when fewer than ``min_days`` days have data.
    """
    maxima = daily_maxima(cm)
    if len(maxima) < min_days:
        raise TierUndetermined(f"{len(maxima)} days with benchmark data, need {min_days}")
    values = np.fromiter(maxima.values(), dtype=float, count=len(maxima))
    mean = float(values.mean())
    changed = bool(values.max() - values.min() > TIER_CHANGE_SPREAD * mean)
    if not changed and not mean > 0:
        raise TierUndetermined("daily maxima are all zero")
    return TierEstimate(changed=changed, tier_bps=None if changed else mean, daily_maxima=maxima)


def with_tier(cm: ConnectionMonth, min_days: int = MIN_TIER_DAYS) -> ConnectionMonth:
    """Return ``cm`` annotated with its inferred tier.

    Propagates :class:`TierUndetermined`; a changed tier yields a month with
    ``tier_changed`` set and no tier.
    """
    est = infer_tier(cm, min_days)
    return dataclasses.replace(cm, inferred_tier_bps=est.tier_bps, tier_changed=est.changed)


def require_tier(cm: ConnectionMonth, min_days: int = MIN_TIER_DAYS) -> float:
    if cm.tier_changed:
        raise TierChanged(f"{cm.unit_id} {cm.year_month}")
    if cm.inferred_tier_bps is not None:
        return cm.inferred_tier_bps
    est = infer_tier(cm, min_days)
    if est.changed:
        raise TierChanged(f"{cm.unit_id} {cm.year_month}")
    return est.tier_bps


def recurrent_congestion(samples: Sequence[float], tier_bps: float, params: RcParams = CANONICAL_RC) -> RcVerdict:
    """Fraction of samples strictly below ``q * tier`` and whether it strictly exceeds ``t``."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("recurrent congestion is undefined for an empty sample")
    if not tier_bps > 0:
        raise ValueError("tier must be positive")
    below = int(np.count_nonzero(x / tier_bps < params.q))
    frac = below / x.size
    return RcVerdict(below_fraction=frac, congested=frac > params.t, n_samples=int(x.size), tier_bps=float(tier_bps))


def canonical_rc(cm: ConnectionMonth, params: RcParams = CANONICAL_RC, min_days: int = MIN_TIER_DAYS) -> RcVerdict:
    tier = require_tier(cm, min_days)
    if not cm.benchmark_runs:
        raise TierUndetermined("no benchmark runs")
    return recurrent_congestion([sustained_throughput(r) for r in cm.benchmark_runs], tier, params)
