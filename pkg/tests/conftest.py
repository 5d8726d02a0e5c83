from __future__ import annotations

import io
from pathlib import Path

import pytest

from congestloc.model import BenchmarkRun, Connection, ConnectionMonth, Technology, WebsiteFetch, parse_timestamp

DATA = Path(__file__).parent / "data"

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    _ACCEPTANCE.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def ts(text: str) -> int:
    return parse_timestamp(text)


def csv_bytes(text: str) -> io.BytesIO:
    return io.BytesIO(text.encode())


def bench_run(unit: str, when: int, bps: float) -> BenchmarkRun:
    b = round(bps * 5 / 8)
    return BenchmarkRun(unit, when, (b,) * 6)


def month_of(runs=(), fetches=(), unit="u1", ym="2011-03", offset=0) -> ConnectionMonth:
    conn = Connection(unit, "isp_01", Technology.CABLE, 10e6, offset)
    return ConnectionMonth(conn, ym, tuple(runs), tuple(fetches))


def fetch(unit: str, when: int, site: str, bps: float, page: int = 1_000_000) -> WebsiteFetch:
    return WebsiteFetch(unit, when, site, page * 8 / bps, page)


@pytest.fixture
def march_start() -> int:
    return ts("2011-03-01T00:00:00Z")
