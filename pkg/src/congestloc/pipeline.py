"""Per-connection-month analysis and the CSV files it produces."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .metrics import CANONICAL_RC, MIN_TIER_DAYS, ExcludedMonth, RcParams, RcVerdict, canonical_rc, with_tier
from .model import SITES, ConnectionMonth
from .report import ConnectionResult
from .tis import DetectorParams, TisVerdict, detect_tis


@dataclass(frozen=True)
class Exclusion:
    unit_id: str
    year_month: str
    reason: str

    @property
    def key(self) -> tuple[str, str]:
        return (self.unit_id, self.year_month)


def analyze_month(
    cm: ConnectionMonth,
    rc_params: RcParams = CANONICAL_RC,
    detector: DetectorParams = DetectorParams(),
    min_days: int = MIN_TIER_DAYS,
) -> ConnectionResult:
    """Recurrent congestion and TIS verdicts for one month.

    Raises :class:`ExcludedMonth` when the tier changed or cannot be inferred.
    """
    cm = with_tier(cm, min_days)
    rc = canonical_rc(cm, rc_params, min_days)
    tis = detect_tis(cm, detector, min_days)
    conn = cm.connection
    return ConnectionResult(conn.unit_id, cm.year_month, conn.isp_id, conn.technology.value, rc, tis)


def analyze(
    months: Iterable[ConnectionMonth],
    rc_params: RcParams = CANONICAL_RC,
    detector: DetectorParams = DetectorParams(),
    min_days: int = MIN_TIER_DAYS,
) -> tuple[list[ConnectionResult], list[Exclusion]]:
    results, excluded = [], []
    for cm in months:
        try:
            results.append(analyze_month(cm, rc_params, detector, min_days))
        except ExcludedMonth as exc:
            excluded.append(Exclusion(cm.unit_id, cm.year_month, exc.reason))
    return results, excluded


VERDICT_COLUMNS = (
    "unit_id", "year_month", "eligible", "matched_cycles", "tight", "high_count",
    *(f"r_site{i}" for i in range(1, len(SITES) + 1)),
)
RC_COLUMNS = (
    "unit_id", "year_month", "isp_id", "technology", "tier_bps", "n_samples", "below_fraction", "congested",
)
EXCLUSION_COLUMNS = ("unit_id", "year_month", "reason")


def _flag(b: bool) -> str:
    return "true" if b else "false"


def _parse_flag(s: str) -> bool:
    if s not in ("true", "false"):
        raise ValueError(f"bad boolean {s!r}")
    return s == "true"


def write_verdicts(out: IO[str], results: Sequence[ConnectionResult]) -> None:
    """TIS verdicts; ``r_site1`` .. ``r_site10`` follow the canonical site order."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(VERDICT_COLUMNS)
    for r in results:
        v = r.tis
        corrs = ["" if v.correlations.get(s) is None else repr(v.correlations[s]) for s in SITES]
        w.writerow([r.unit_id, r.year_month, _flag(v.eligible), v.matched_cycles, _flag(v.tight), v.high_count, *corrs])


def write_rc(out: IO[str], results: Sequence[ConnectionResult]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(RC_COLUMNS)
    for r in results:
        rc = r.rc
        w.writerow([r.unit_id, r.year_month, r.isp_id, r.technology, repr(rc.tier_bps), rc.n_samples,
                    repr(rc.below_fraction), _flag(rc.congested)])


def write_exclusions(out: IO[str], excluded: Sequence[Exclusion]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(EXCLUSION_COLUMNS)
    for e in excluded:
        w.writerow([e.unit_id, e.year_month, e.reason])


def _check_header(reader: csv.DictReader, expected: Sequence[str], what: str) -> None:
    if tuple(reader.fieldnames or ()) != tuple(expected):
        raise ValueError(f"{what}: header {reader.fieldnames} does not match {list(expected)}")


def read_verdicts(source: IO[str]) -> dict[tuple[str, str], TisVerdict]:
    reader = csv.DictReader(source)
    _check_header(reader, VERDICT_COLUMNS, "verdicts")
    out = {}
    for row in reader:
        corrs = {s: (float(row[f"r_site{i}"]) if row[f"r_site{i}"] else None) for i, s in enumerate(SITES, 1)}
        out[(row["unit_id"], row["year_month"])] = TisVerdict(
            correlations=corrs,
            high_count=int(row["high_count"]),
            tight=_parse_flag(row["tight"]),
            eligible=_parse_flag(row["eligible"]),
            matched_cycles=int(row["matched_cycles"]),
        )
    return out


def read_rc(source: IO[str]) -> dict[tuple[str, str], tuple[str, str, RcVerdict]]:
    reader = csv.DictReader(source)
    _check_header(reader, RC_COLUMNS, "rc")
    return {
        (row["unit_id"], row["year_month"]): (
            row["isp_id"],
            row["technology"],
            RcVerdict(float(row["below_fraction"]), _parse_flag(row["congested"]), int(row["n_samples"]),
                      float(row["tier_bps"])),
        )
        for row in reader
    }


def read_exclusions(source: IO[str]) -> list[Exclusion]:
    reader = csv.DictReader(source)
    _check_header(reader, EXCLUSION_COLUMNS, "exclusions")
    return [Exclusion(row["unit_id"], row["year_month"], row["reason"]) for row in reader]


def join_results(verdicts: dict, rc: dict) -> list[ConnectionResult]:
    if set(verdicts) != set(rc):
        raise ValueError("verdicts and rc files cover different connection-months")
    out = []
    for key in sorted(verdicts):
        isp, tech, rcv = rc[key]
        out.append(ConnectionResult(key[0], key[1], isp, tech, rcv, verdicts[key]))
    return out
