"""Domain types for connections and measurements, plus CSV ingestion.

Timestamps are integer seconds since the Unix epoch, always UTC. Month
grouping uses UTC calendar months; day boundaries may be shifted by a
per-unit UTC offset taken from ``connections.csv``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Collection, Iterable

SITES: tuple[str, ...] = (
    "cnn.com",
    "youtube.com",
    "msn.com",
    "amazon.com",
    "yahoo.com",
    "ebay.com",
    "wikipedia.org",
    "facebook.com",
    "google.com",
    "netflix.com",
)

N_INTERVALS = 6
INTERVAL_S = 5


class Technology(str, enum.Enum):
    DSL = "DSL"
    CABLE = "CABLE"
    OTHER = "OTHER"


class Schema(str, enum.Enum):
    BENCHMARK = "BENCHMARK"
    WEBSITE = "WEBSITE"
    CONNECTIONS = "CONNECTIONS"


HEADERS: dict[Schema, tuple[str, ...]] = {
    Schema.BENCHMARK: ("unit_id", "start_time_iso8601", "b0", "b1", "b2", "b3", "b4", "b5"),
    Schema.WEBSITE: ("unit_id", "start_time_iso8601", "site_id", "total_time_s", "total_bytes"),
    Schema.CONNECTIONS: ("unit_id", "isp_id", "technology", "advertised_tier_bps"),
}
OPTIONAL_COLUMNS: dict[Schema, tuple[str, ...]] = {
    Schema.CONNECTIONS: ("utc_offset_s",),
}
FILENAMES: dict[Schema, str] = {
    Schema.BENCHMARK: "benchmark.csv",
    Schema.WEBSITE: "website.csv",
    Schema.CONNECTIONS: "connections.csv",
}


class IngestError(Exception):
    """Fatal ingestion failure: unreadable stream or bad header."""


@dataclass(frozen=True, slots=True)
class Connection:
    unit_id: str
    isp_id: str
    technology: Technology
    advertised_tier_bps: float | None = None
    utc_offset_s: int = 0

    def __post_init__(self):
        if self.advertised_tier_bps is not None and not self.advertised_tier_bps > 0:
            raise ValueError("advertised tier must be positive")


@dataclass(frozen=True, slots=True)
class BenchmarkRun:
    unit_id: str
    start_time: int
    interval_bytes: tuple[int, ...]

    def __post_init__(self):
        if len(self.interval_bytes) != N_INTERVALS:
            raise ValueError("interval count")
        if any(b < 0 for b in self.interval_bytes):
            raise ValueError("negative interval bytes")


@dataclass(frozen=True, slots=True)
class WebsiteFetch:
    unit_id: str
    start_time: int
    site_id: str
    total_time_s: float
    total_bytes: int | None = None

    def __post_init__(self):
        if self.site_id not in SITES:
            raise ValueError(f"unknown site {self.site_id!r}")
        if not self.total_time_s > 0 or math.isinf(self.total_time_s):
            raise ValueError("non-positive time")
        if self.total_bytes is not None and self.total_bytes < 0:
            raise ValueError("negative bytes")


@dataclass(frozen=True, slots=True)
class Reject:
    file: str
    line: int | None
    reason: str


@dataclass(frozen=True)
class ConnectionMonth:
    """All measurements of one connection in one UTC calendar month."""

    connection: Connection
    year_month: str
    benchmark_runs: tuple[BenchmarkRun, ...] = ()
    website_fetches: tuple[WebsiteFetch, ...] = ()
    inferred_tier_bps: float | None = None
    tier_changed: bool = False

    @property
    def unit_id(self) -> str:
        return self.connection.unit_id

    @property
    def key(self) -> tuple[str, str]:
        return (self.connection.unit_id, self.year_month)


# -- time helpers -----------------------------------------------------------

def parse_timestamp(text: str) -> int:
    """Parse an ISO-8601 timestamp to UTC epoch seconds.

    Naive timestamps are taken as UTC. Sub-second parts are truncated.
    """
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return math.floor(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def year_month(ts: int) -> str:
    tm = time.gmtime(ts)
    return f"{tm.tm_year:04d}-{tm.tm_mon:02d}"


def day_key(ts: int, utc_offset_s: int = 0) -> str:
    tm = time.gmtime(ts + utc_offset_s)
    return f"{tm.tm_year:04d}-{tm.tm_mon:02d}-{tm.tm_mday:02d}"


# -- CSV ingestion ------------------------------------------------------------

def _parse_int(text: str, what: str) -> int:
    try:
        value = int(text)
    except ValueError:
        # tolerate "1234.0" written by spreadsheets
        f = float(text)
        if not f.is_integer():
            raise ValueError(f"non-integer {what}") from None
        value = int(f)
    return value


def _parse_benchmark(row: list[str]) -> BenchmarkRun:
    if len(row) != 2 + N_INTERVALS:
        raise ValueError("interval count")
    values = row[2:]
    if any(v.strip() == "" for v in values):
        raise ValueError("interval count")
    return BenchmarkRun(
        unit_id=row[0],
        start_time=parse_timestamp(row[1]),
        interval_bytes=tuple(_parse_int(v, "bytes") for v in values),
    )


def _parse_website(row: list[str]) -> WebsiteFetch:
    if len(row) != 5:
        raise ValueError("column count")
    total_bytes = row[4].strip()
    return WebsiteFetch(
        unit_id=row[0],
        start_time=parse_timestamp(row[1]),
        site_id=row[2],
        total_time_s=float(row[3]),
        total_bytes=_parse_int(total_bytes, "bytes") if total_bytes else None,
    )


def _parse_connection(row: list[str], ncols: int) -> Connection:
    if len(row) != ncols:
        raise ValueError("column count")
    try:
        tech = Technology(row[2].strip().upper())
    except ValueError:
        raise ValueError(f"unknown technology {row[2]!r}") from None
    tier = row[3].strip()
    offset = row[4].strip() if ncols > 4 else ""
    return Connection(
        unit_id=row[0],
        isp_id=row[1],
        technology=tech,
        advertised_tier_bps=float(tier) if tier else None,
        utc_offset_s=_parse_int(offset, "offset") if offset else 0,
    )


def ingest_csv(
    source: IO[bytes] | IO[str],
    schema: Schema,
    name: str | None = None,
    known_units: Collection[str] | None = None,
):
    """Parse one CSV stream into records, quarantining bad rows.

    Returns ``(records, rejects)``. Only a missing or mismatched header, or an
    undecodable stream, raises :class:`IngestError`. Measurement rows for a
    unit outside ``known_units`` (when given) are rejected.
    """
    schema = Schema(schema)
    name = name or FILENAMES[schema]
    try:
        raw = source.read()
    except OSError as exc:
        raise IngestError(f"{name}: unreadable stream: {exc}") from exc
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise IngestError(f"{name}: not UTF-8: {exc}") from exc
    elif raw.startswith("﻿"):
        raw = raw[1:]

    reader = csv.reader(io.StringIO(raw, newline=""))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError(f"{name}: missing header") from None
    expected = list(HEADERS[schema])
    optional = list(OPTIONAL_COLUMNS.get(schema, ()))
    if header != expected and header != expected + optional:
        raise IngestError(f"{name}: header {header} does not match {expected}")

    records = []
    rejects: list[Reject] = []
    seen_units: set[str] = set()
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if schema is Schema.BENCHMARK:
                rec = _parse_benchmark(row)
            elif schema is Schema.WEBSITE:
                rec = _parse_website(row)
            if schema is not Schema.CONNECTIONS:
                if known_units is not None and rec.unit_id not in known_units:
                    raise ValueError(f"unknown unit_id {rec.unit_id!r}")
            else:
                rec = _parse_connection(row, len(header))
                if rec.unit_id in seen_units:
                    raise ValueError(f"duplicate unit_id {rec.unit_id!r}")
                seen_units.add(rec.unit_id)
        except (ValueError, OverflowError) as exc:
            rejects.append(Reject(name, line, str(exc)))
            continue
        records.append(rec)
    return records, rejects


def ingest_path(path, schema: Schema, known_units: Collection[str] | None = None):
    try:
        with open(path, "rb") as fh:
            return ingest_csv(fh, schema, Path(path).name, known_units)
    except FileNotFoundError as exc:
        raise IngestError(f"{path}: no such file") from exc
    except IsADirectoryError as exc:
        raise IngestError(f"{path}: is a directory") from exc


def _fmt_float(x: float) -> str:
    return repr(float(x))


def write_records(out: IO[str], records: Iterable, schema: Schema) -> None:
    """Serialize records in the ingestion schema (inverse of ingest_csv)."""
    schema = Schema(schema)
    records = list(records)
    writer = csv.writer(out, lineterminator="\n")
    header = list(HEADERS[schema])
    with_offset = schema is Schema.CONNECTIONS and any(r.utc_offset_s for r in records)
    if with_offset:
        header += OPTIONAL_COLUMNS[schema]
    writer.writerow(header)
    for r in records:
        if schema is Schema.BENCHMARK:
            writer.writerow([r.unit_id, format_timestamp(r.start_time), *r.interval_bytes])
        elif schema is Schema.WEBSITE:
            writer.writerow([
                r.unit_id,
                format_timestamp(r.start_time),
                r.site_id,
                _fmt_float(r.total_time_s),
                "" if r.total_bytes is None else r.total_bytes,
            ])
        else:
            row = [
                r.unit_id,
                r.isp_id,
                r.technology.value,
                "" if r.advertised_tier_bps is None else _fmt_float(r.advertised_tier_bps),
            ]
            if with_offset:
                row.append(r.utc_offset_s)
            writer.writerow(row)


def write_rejects(out: IO[str], rejects: Iterable[Reject]) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["file", "line", "reason"])
    for r in rejects:
        writer.writerow([r.file, "" if r.line is None else r.line, r.reason])


# -- grouping -----------------------------------------------------------------

@dataclass
class _Bucket:
    runs: list = field(default_factory=list)
    fetches: list = field(default_factory=list)


def group_by_month(
    records: Iterable[BenchmarkRun | WebsiteFetch],
    connections: Iterable[Connection] | dict[str, Connection],
) -> tuple[list[ConnectionMonth], list[Reject]]:
    """Partition records into per-(unit, UTC month) groups.

    Records whose unit is not in ``connections`` are returned as rejects.
    Output is sorted by (unit_id, year_month); records inside each group are
    time-ordered.
    """
    if not isinstance(connections, dict):
        connections = {c.unit_id: c for c in connections}
    buckets: dict[tuple[str, str], _Bucket] = defaultdict(_Bucket)
    rejects: list[Reject] = []
    for rec in records:
        if rec.unit_id not in connections:
            fname = FILENAMES[Schema.BENCHMARK if isinstance(rec, BenchmarkRun) else Schema.WEBSITE]
            rejects.append(Reject(fname, None, f"unknown unit_id {rec.unit_id!r}"))
            continue
        b = buckets[(rec.unit_id, year_month(rec.start_time))]
        (b.runs if isinstance(rec, BenchmarkRun) else b.fetches).append(rec)

    months = []
    for (unit, ym) in sorted(buckets):
        b = buckets[(unit, ym)]
        months.append(ConnectionMonth(
            connection=connections[unit],
            year_month=ym,
            benchmark_runs=tuple(sorted(b.runs, key=lambda r: r.start_time)),
            website_fetches=tuple(sorted(b.fetches, key=lambda f: (f.start_time, f.site_id))),
        ))
    return months, rejects

