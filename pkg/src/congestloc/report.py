"""Per-ISP prevalence tables and plot-ready series."""

from __future__ import annotations

import csv
import enum
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .metrics import RcVerdict
from .tis import TisVerdict

ALL = "ALL"


class GroupBy(str, enum.Enum):
    ISP = "ISP"
    TECHNOLOGY = "TECHNOLOGY"
    ALL = "ALL"


class Metric(str, enum.Enum):
    RC = "RC"
    TIS = "TIS"


@dataclass(frozen=True)
class ConnectionResult:
    unit_id: str
    year_month: str
    isp_id: str
    technology: str
    rc: RcVerdict
    tis: TisVerdict

    @property
    def key(self) -> tuple[str, str]:
        return (self.unit_id, self.year_month)


@dataclass(frozen=True)
class IspSummary:
    isp_id: str
    technology: str
    year_month: str
    total: int
    fc: int
    ptis: int
    fc_and_ptis: int

    def __post_init__(self):
        if not (0 <= self.fc_and_ptis <= min(self.fc, self.ptis) and self.fc <= self.total and self.ptis <= self.total):
            raise ValueError(f"inconsistent counts {self}")

    @property
    def ratio_inter_over_ptis(self) -> float | None:
        return self.fc_and_ptis / self.ptis if self.ptis else None

    @property
    def ratio_inter_over_fc(self) -> float | None:
        return self.fc_and_ptis / self.fc if self.fc else None

    def percentages(self) -> dict[str, int | None]:
        """Integer percentages as printed in the prevalence tables."""
        return {
            "fc": percent(self.fc, self.total),
            "ptis": percent(self.ptis, self.total),
            "inter_over_ptis": percent(self.fc_and_ptis, self.ptis),
            "inter_over_fc": percent(self.fc_and_ptis, self.fc),
        }


@dataclass(frozen=True)
class PrevalenceRow:
    isp_id: str
    year_month: str
    metric: Metric
    fraction: float


def percent(num: int, den: int) -> int | None:
    """``100 * num / den`` rounded half-up to an integer, exactly."""
    if den == 0:
        return None
    return (200 * num + den) // (2 * den)


def _group_key(r: ConnectionResult, group_by: GroupBy) -> tuple[str, str, str]:
    if group_by is GroupBy.ISP:
        return (r.isp_id, r.technology, r.year_month)
    if group_by is GroupBy.TECHNOLOGY:
        return (ALL, r.technology, r.year_month)
    return (ALL, ALL, r.year_month)


def summarize(results: Iterable[ConnectionResult], group_by: GroupBy = GroupBy.ISP) -> list[IspSummary]:
    """Count analysable, congested and tight connection-months per group.

    Only eligible connection-months are counted. Raises ``ValueError`` if a
    connection appears twice in the same month.
    """
    group_by = GroupBy(group_by)
    counts: dict[tuple[str, str, str], list[int]] = defaultdict(lambda: [0, 0, 0, 0])
    seen = set()
    for r in results:
        if r.key in seen:
            raise ValueError(f"duplicate verdict for {r.key}")
        seen.add(r.key)
        if not r.tis.eligible:
            continue
        c = counts[_group_key(r, group_by)]
        c[0] += 1
        c[1] += r.rc.congested
        c[2] += r.tis.tight
        c[3] += r.rc.congested and r.tis.tight
    return [IspSummary(*k, *counts[k]) for k in sorted(counts)]


def from_counts(rows: Iterable[tuple]) -> list[IspSummary]:
    return [IspSummary(*row) for row in rows]


def prevalence_series(summaries: Sequence[IspSummary], metric: Metric) -> list[PrevalenceRow]:
    """Fraction of connections with the metric, per ISP and month.

    Counts for the same ISP and month are pooled across technologies. An ISP
    with no connections in a month yields no row.
    """
    metric = Metric(metric)
    pooled: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0])
    for s in summaries:
        p = pooled[(s.isp_id, s.year_month)]
        p[0] += s.fc if metric is Metric.RC else s.ptis
        p[1] += s.total
    return [
        PrevalenceRow(isp, ym, metric, n / total)
        for (isp, ym), (n, total) in sorted(pooled.items())
        if total > 0
    ]


def anonymize(summaries: Sequence[IspSummary]) -> list[IspSummary]:
    """Replace ISP identifiers by ``isp_01``, ``isp_02``, ... in sorted order."""
    ids = sorted({s.isp_id for s in summaries if s.isp_id != ALL})
    width = max(2, len(str(len(ids))))
    mapping = {isp: f"isp_{i:0{width}d}" for i, isp in enumerate(ids, 1)}
    mapping[ALL] = ALL
    return sorted(
        (IspSummary(mapping[s.isp_id], s.technology, s.year_month, s.total, s.fc, s.ptis, s.fc_and_ptis) for s in summaries),
        key=lambda s: (s.isp_id, s.technology, s.year_month),
    )


SUMMARY_COLUMNS = (
    "isp_id", "technology", "year_month", "total", "fc", "ptis", "fc_and_ptis",
    "ratio_inter_over_ptis", "ratio_inter_over_fc",
)


def _opt(x: float | None) -> str:
    return "" if x is None else repr(x)


def write_summary(out: IO[str], summaries: Iterable[IspSummary]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for s in summaries:
        w.writerow([
            s.isp_id, s.technology, s.year_month, s.total, s.fc, s.ptis, s.fc_and_ptis,
            _opt(s.ratio_inter_over_ptis), _opt(s.ratio_inter_over_fc),
        ])


def read_summary(source: IO[str]) -> list[IspSummary]:
    reader = csv.DictReader(source)
    return [
        IspSummary(
            row["isp_id"], row["technology"], row["year_month"],
            int(row["total"]), int(row["fc"]), int(row["ptis"]), int(row["fc_and_ptis"]),
        )
        for row in reader
    ]


def write_prevalence(out: IO[str], rows: Iterable[PrevalenceRow]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["isp_id", "year_month", "metric", "fraction"])
    for r in rows:
        w.writerow([r.isp_id, r.year_month, r.metric.value, repr(r.fraction)])


def plot_prevalence(rows: Sequence[PrevalenceRow], path, title: str = "") -> None:
    """Grouped bar chart (ISP on x, one bar per month) written as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "congestloc"
    isps = sorted({r.isp_id for r in rows})
    months = sorted({r.year_month for r in rows})
    value = {(r.isp_id, r.year_month): r.fraction for r in rows}
    width = 0.8 / max(1, len(months))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(isps) + 2), 3.5))
    for j, ym in enumerate(months):
        xs = [i + j * width for i, isp in enumerate(isps) if (isp, ym) in value]
        ys = [value[(isp, ym)] for isp in isps if (isp, ym) in value]
        ax.bar(xs, ys, width=width, label=ym)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(isps))])
    ax.set_xticklabels(isps, rotation=45, ha="right")
    ax.set_ylabel("fraction of connections")
    if title:
        ax.set_title(title)
    if months:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
