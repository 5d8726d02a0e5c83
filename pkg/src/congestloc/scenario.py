"""Scenario configuration and link processes for the measurement simulator.

A scenario is an INI file. Sections::

    [scenario]            name, seed, start (YYYY-MM), months, cadence_s,
                          website_delay_s, site_spacing_s, page_bytes, tau,
                          missing_prob
    [link.<name>]         region, capacity_bps or capacity_x_tier,
                          diurnal_amplitude, noise_sigma, episode_fraction,
                          episode_mean_s, episode_flows, weekend_factor,
                          utc_offset_s, traversed_by
    [population.<name>]   count, isp_ids, technology, tier_bps,
                          advertised_tier_bps, utc_offset_s, initial_segment,
                          middle_mile, powerboost

``INITIAL_SEGMENT`` links are templates instantiated once per connection and
may give their capacity relative to the population tier. ``MIDDLE_MILE``
links are shared by every connection assigned to them (round-robin over the
population's ``middle_mile`` list); ``traversed_by`` selects whether the
benchmark path, the website paths or both cross them. At most one
``PUBLIC_CORE`` link exists and it is on every path. A ``WEBSITE_EDGE`` link
is a template instantiated once per site and shared across connections.
Missing core or edge sections default to slack links.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import hashlib
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .model import SITES, Connection, Technology

DAY_S = 86400
PEAK_HOUR = 21.0
SLACK_BPS = 1e12


class ScenarioError(ValueError):
    """Invalid scenario; the message names the offending key."""


class Region(str, enum.Enum):
    INITIAL_SEGMENT = "INITIAL_SEGMENT"
    MIDDLE_MILE = "MIDDLE_MILE"
    PUBLIC_CORE = "PUBLIC_CORE"
    WEBSITE_EDGE = "WEBSITE_EDGE"


class Traversal(str, enum.Enum):
    ALL = "all"
    BENCHMARK = "benchmark"
    WEBSITES = "websites"


def stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``, reproducible from ``seed`` alone."""
    return np.random.default_rng(np.random.SeedSequence([seed, stable_hash(name)]))


def diurnal_load(t: np.ndarray, utc_offset_s: int = 0, weekend_factor: float = 0.5) -> np.ndarray:
    """Raised-cosine load in [0, 1] peaking at 21:00 local time on weekdays."""
    local = np.asarray(t, dtype=np.int64) + utc_offset_s
    hour = (local % DAY_S) / 3600.0
    load = 0.5 * (1.0 + np.cos(2.0 * np.pi * (hour - PEAK_HOUR) / 24.0))
    # 1970-01-01 was a Thursday; Monday = 0
    weekday = (local // DAY_S + 3) % 7
    return np.where(weekday >= 5, weekend_factor * load, load)


@dataclass(frozen=True)
class EpisodeSchedule:
    """On/off congestion episodes as an alternating renewal process."""

    toggles: np.ndarray
    initially_on: bool

    @classmethod
    def generate(cls, rng: np.random.Generator, start: int, end: int, fraction: float, mean_on_s: float):
        if fraction <= 0.0:
            return cls(np.empty(0), False)
        if fraction >= 1.0:
            return cls(np.empty(0), True)
        mean_off_s = mean_on_s * (1.0 - fraction) / fraction
        on = bool(rng.random() < fraction)
        state = on
        t = float(start)
        toggles = []
        while t < end:
            t += rng.exponential(mean_on_s if state else mean_off_s)
            toggles.append(t)
            state = not state
        return cls(np.asarray(toggles), on)

    def active(self, t: np.ndarray) -> np.ndarray:
        n = np.searchsorted(self.toggles, np.asarray(t, dtype=float), side="right")
        return (n % 2 == 0) == self.initially_on


@dataclass(frozen=True)
class LinkProcess:
    link_id: str
    region: Region
    base_capacity_bps: float
    diurnal_amplitude: float = 0.0
    noise_sigma: float = 0.1
    episode_flows: int = 2
    weekend_factor: float = 0.5
    utc_offset_s: int = 0
    episodes: EpisodeSchedule | None = field(default=None, compare=False)
    traversed_by: Traversal = Traversal.ALL

    def __post_init__(self):
        if not self.base_capacity_bps > 0:
            raise ScenarioError(f"{self.link_id}: capacity must be positive")
        if not 0.0 <= self.diurnal_amplitude < 1.0:
            raise ScenarioError(f"{self.link_id}: diurnal_amplitude must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ScenarioError(f"{self.link_id}: noise_sigma must be non-negative")
        if self.episode_flows < 1:
            raise ScenarioError(f"{self.link_id}: episode_flows must be >= 1")

    def competing_flows(self, t) -> np.ndarray:
        t = np.asarray(t)
        if self.episodes is None:
            return np.ones(t.shape, dtype=np.int64)
        return np.where(self.episodes.active(t), self.episode_flows, 1)

    def share(self, t) -> np.ndarray:
        """Available bandwidth per flow at time(s) ``t``."""
        t = np.asarray(t)
        load = diurnal_load(t, self.utc_offset_s, self.weekend_factor) if self.diurnal_amplitude else 0.0
        return self.base_capacity_bps * (1.0 - self.diurnal_amplitude * load) / self.competing_flows(t)


@dataclass(frozen=True)
class SimConnection:
    connection: Connection
    tier_bps: float
    initial: LinkProcess
    benchmark_middle: tuple[LinkProcess, ...]
    website_middle: tuple[LinkProcess, ...]
    powerboost: float = 1.0

    @property
    def unit_id(self) -> str:
        return self.connection.unit_id


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    start: int
    end: int
    connections: tuple[SimConnection, ...]
    core: LinkProcess
    edges: dict[str, LinkProcess]
    cadence_s: int = 7200
    website_delay_s: int = 600
    site_spacing_s: int = 20
    page_bytes: int = 1_000_000
    tau: float = 0.2
    missing_prob: float = 0.0

    def benchmark_path(self, c: SimConnection) -> tuple[LinkProcess, ...]:
        return (c.initial, *c.benchmark_middle, self.core)

    def website_path(self, c: SimConnection, site: str) -> tuple[LinkProcess, ...]:
        return (c.initial, *c.website_middle, self.core, self.edges[site])

    @property
    def months(self) -> list[str]:
        out = []
        dt = datetime.fromtimestamp(self.start, tz=timezone.utc)
        y, m = dt.year, dt.month
        while _month_start(y, m) < self.end:
            out.append(f"{y:04d}-{m:02d}")
            y, m = (y + 1, 1) if m == 12 else (y, m + 1)
        return out


def _month_start(year: int, month: int) -> int:
    return int(datetime(year, month, 1, tzinfo=timezone.utc).timestamp())


# -- config parsing -----------------------------------------------------------

_SCENARIO_KEYS = {
    "name", "seed", "start", "months", "cadence_s", "website_delay_s", "site_spacing_s",
    "page_bytes", "tau", "missing_prob",
}
_LINK_KEYS = {
    "region", "capacity_bps", "capacity_x_tier", "diurnal_amplitude", "noise_sigma",
    "episode_fraction", "episode_mean_s", "episode_flows", "weekend_factor", "utc_offset_s",
    "traversed_by",
}
_POP_KEYS = {
    "count", "isp_ids", "technology", "tier_bps", "advertised_tier_bps", "utc_offset_s",
    "initial_segment", "middle_mile", "powerboost",
}


class _Section:
    """Typed access to one config section, with errors naming the key."""

    def __init__(self, name: str, items: dict[str, str], allowed: set[str]):
        self.name = name
        self.items = items
        unknown = sorted(set(items) - allowed)
        if unknown:
            raise ScenarioError(f"[{name}] unknown key {unknown[0]!r}")

    def _get(self, key, default, conv):
        if key not in self.items:
            if default is _REQUIRED:
                raise ScenarioError(f"[{self.name}] missing key {key!r}")
            return default
        try:
            return conv(self.items[key])
        except (ValueError, KeyError) as exc:
            raise ScenarioError(f"[{self.name}] bad value for {key!r}: {self.items[key]!r}") from exc

    def text(self, key, default=None):
        return self._get(key, default, lambda s: s.strip())

    def integer(self, key, default=None):
        return self._get(key, default, _to_int)

    def real(self, key, default=None):
        return self._get(key, default, _to_float)

    def names(self, key, default=()):
        return self._get(key, tuple(default), lambda s: tuple(x.strip() for x in s.split(",") if x.strip()))

    def check(self, key, ok: bool, what: str):
        if not ok:
            raise ScenarioError(f"[{self.name}] {key!r} {what}")


_REQUIRED = object()


def _to_int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        f = float(s)
        if not f.is_integer():
            raise
        return int(f)


def _to_float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(s)
    return v


@dataclass(frozen=True)
class _LinkSpec:
    name: str
    section: _Section
    region: Region


def _link(spec: _LinkSpec, link_id: str, seed: int, start: int, end: int, tier: float | None = None) -> LinkProcess:
    s = spec.section
    cap = s.real("capacity_bps")
    rel = s.real("capacity_x_tier")
    if cap is not None and rel is not None:
        raise ScenarioError(f"[{s.name}] give only one of 'capacity_bps' and 'capacity_x_tier'")
    if rel is not None:
        s.check("capacity_x_tier", spec.region is Region.INITIAL_SEGMENT, "is only allowed on INITIAL_SEGMENT links")
        s.check("capacity_x_tier", rel > 0, "must be positive")
        cap = rel * tier
    if cap is None:
        cap = SLACK_BPS
    s.check("capacity_bps", cap > 0, "must be positive")
    fraction = s.real("episode_fraction", 0.0)
    s.check("episode_fraction", 0.0 <= fraction <= 1.0, "must lie in [0, 1]")
    mean_on = s.real("episode_mean_s", 10800.0)
    s.check("episode_mean_s", mean_on > 0, "must be positive")
    amp = s.real("diurnal_amplitude", 0.0)
    s.check("diurnal_amplitude", 0.0 <= amp < 1.0, "must lie in [0, 1)")
    sigma = s.real("noise_sigma", 0.1)
    s.check("noise_sigma", sigma >= 0, "must be non-negative")
    flows = s.integer("episode_flows", 2)
    s.check("episode_flows", flows >= 1, "must be >= 1")
    wf = s.real("weekend_factor", 0.5)
    s.check("weekend_factor", 0.0 <= wf <= 1.0, "must lie in [0, 1]")
    traversal = s.text("traversed_by", "all")
    try:
        traversal = Traversal(traversal.lower())
    except ValueError:
        raise ScenarioError(f"[{s.name}] bad value for 'traversed_by': {traversal!r}") from None
    if traversal is not Traversal.ALL:
        s.check("traversed_by", spec.region is Region.MIDDLE_MILE, "is only allowed on MIDDLE_MILE links")
    episodes = None
    if fraction > 0:
        episodes = EpisodeSchedule.generate(substream(seed, "link:" + link_id), start, end, fraction, mean_on)
    return LinkProcess(
        link_id=link_id,
        region=spec.region,
        base_capacity_bps=cap,
        diurnal_amplitude=amp,
        noise_sigma=sigma,
        episode_flows=flows,
        weekend_factor=wf,
        utc_offset_s=s.integer("utc_offset_s", 0),
        episodes=episodes,
        traversed_by=traversal,
    )


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Build a fully realized :class:`Scenario` from INI text."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: {exc}") from exc

    if not cp.has_section("scenario"):
        raise ScenarioError("missing section [scenario]")
    sc = _Section("scenario", dict(cp["scenario"]), _SCENARIO_KEYS)
    seed = sc.integer("seed", _REQUIRED)
    sc.check("seed", seed >= 0, "must be non-negative")
    start_text = sc.text("start", _REQUIRED)
    try:
        y, m = (int(p) for p in start_text.split("-"))
        start = _month_start(y, m)
    except (ValueError, TypeError):
        raise ScenarioError(f"[scenario] bad value for 'start': {start_text!r} (want YYYY-MM)") from None
    n_months = sc.integer("months", 1)
    sc.check("months", n_months >= 1, "must be >= 1")
    yy, mm = y + (m - 1 + n_months) // 12, (m - 1 + n_months) % 12 + 1
    end = _month_start(yy, mm)
    cadence = sc.integer("cadence_s", 7200)
    sc.check("cadence_s", cadence > 0, "must be positive")
    delay = sc.integer("website_delay_s", 600)
    spacing = sc.integer("site_spacing_s", 20)
    sc.check("website_delay_s", delay >= 0, "must be non-negative")
    sc.check("site_spacing_s", spacing >= 0, "must be non-negative")
    page = sc.integer("page_bytes", 1_000_000)
    sc.check("page_bytes", page > 0, "must be positive")
    tau = sc.real("tau", 0.2)
    sc.check("tau", 0.0 <= tau <= 1.0, "must lie in [0, 1]")
    missing = sc.real("missing_prob", 0.0)
    sc.check("missing_prob", 0.0 <= missing < 1.0, "must lie in [0, 1)")
    horizon = end + delay + spacing * len(SITES)

    specs: dict[str, _LinkSpec] = {}
    pops: list[_Section] = []
    for name in cp.sections():
        if name == "scenario":
            continue
        kind, _, short = name.partition(".")
        if kind == "link" and short:
            sec = _Section(name, dict(cp[name]), _LINK_KEYS)
            region_text = sec.text("region", _REQUIRED)
            try:
                region = Region(region_text.upper())
            except ValueError:
                raise ScenarioError(f"[{name}] bad value for 'region': {region_text!r}") from None
            specs[short] = _LinkSpec(short, sec, region)
        elif kind == "population" and short:
            pops.append(_Section(name, dict(cp[name]), _POP_KEYS))
        else:
            raise ScenarioError(f"unknown section [{name}]")
    if not pops:
        raise ScenarioError("no [population.*] sections")

    def only(region: Region) -> _LinkSpec | None:
        found = [s for s in specs.values() if s.region is region]
        if len(found) > 1:
            raise ScenarioError(f"[link.{found[1].name}] at most one {region.value} link is allowed")
        return found[0] if found else None

    core_spec = only(Region.PUBLIC_CORE)
    edge_spec = only(Region.WEBSITE_EDGE)
    if core_spec:
        core = _link(core_spec, "core", seed, start, horizon)
    else:
        core = LinkProcess("core", Region.PUBLIC_CORE, SLACK_BPS, noise_sigma=0.0)
    if edge_spec:
        edges = {site: _link(edge_spec, f"edge:{site}", seed, start, horizon) for site in SITES}
    else:
        edges = {site: LinkProcess(f"edge:{site}", Region.WEBSITE_EDGE, SLACK_BPS, noise_sigma=0.0) for site in SITES}

    shared_mm: dict[str, LinkProcess] = {}
    connections: list[SimConnection] = []
    units: set[str] = set()
    for pop in pops:
        pname = pop.name.partition(".")[2]
        count = pop.integer("count", _REQUIRED)
        pop.check("count", count >= 1, "must be >= 1")
        isps = pop.names("isp_ids", ())
        pop.check("isp_ids", len(isps) > 0, "must name at least one ISP")
        tech_text = pop.text("technology", "OTHER")
        try:
            tech = Technology(tech_text.upper())
        except ValueError:
            raise ScenarioError(f"[{pop.name}] bad value for 'technology': {tech_text!r}") from None
        tier = pop.real("tier_bps", _REQUIRED)
        pop.check("tier_bps", tier > 0, "must be positive")
        advertised = pop.real("advertised_tier_bps", tier)
        pop.check("advertised_tier_bps", advertised > 0, "must be positive")
        offset = pop.integer("utc_offset_s", 0)
        boost = pop.real("powerboost", 1.0)
        pop.check("powerboost", boost >= 1.0, "must be >= 1")
        is_name = pop.text("initial_segment")
        if is_name is not None:
            pop.check("initial_segment", is_name in specs, f"names unknown link {is_name!r}")
            pop.check("initial_segment", specs[is_name].region is Region.INITIAL_SEGMENT, "must name an INITIAL_SEGMENT link")
        mm_names = pop.names("middle_mile", ())
        for mname in mm_names:
            pop.check("middle_mile", mname in specs, f"names unknown link {mname!r}")
            pop.check("middle_mile", specs[mname].region is Region.MIDDLE_MILE, f"link {mname!r} is not MIDDLE_MILE")
            if mname not in shared_mm:
                shared_mm[mname] = _link(specs[mname], f"mm:{mname}", seed, start, horizon)

        for i in range(count):
            unit = f"{pname}-{i:04d}"
            if unit in units:
                raise ScenarioError(f"[{pop.name}] duplicate unit id {unit!r}")
            units.add(unit)
            conn = Connection(unit, isps[i % len(isps)], tech, advertised, offset)
            if is_name is not None:
                initial = _link(specs[is_name], f"{unit}/initial", seed, start, horizon, tier)
                if not specs[is_name].section.items.get("utc_offset_s"):
                    initial = dataclasses.replace(initial, utc_offset_s=offset)
            else:
                initial = LinkProcess(f"{unit}/initial", Region.INITIAL_SEGMENT, SLACK_BPS, noise_sigma=0.0, utc_offset_s=offset)
            bench_mm: tuple[LinkProcess, ...] = ()
            web_mm: tuple[LinkProcess, ...] = ()
            if mm_names:
                mm = shared_mm[mm_names[i % len(mm_names)]]
                if mm.traversed_by in (Traversal.ALL, Traversal.BENCHMARK):
                    bench_mm = (mm,)
                if mm.traversed_by in (Traversal.ALL, Traversal.WEBSITES):
                    web_mm = (mm,)
            connections.append(SimConnection(conn, tier, initial, bench_mm, web_mm, boost))

    return Scenario(
        name=sc.text("name", Path(source).stem),
        seed=seed,
        start=start,
        end=end,
        connections=tuple(connections),
        core=core,
        edges=edges,
        cadence_s=cadence,
        website_delay_s=delay,
        site_spacing_s=spacing,
        page_bytes=page,
        tau=tau,
        missing_prob=missing,
    )


def bundled_scenarios() -> list[str]:
    root = resources.files("congestloc") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def scenario_text(name_or_path: str | Path) -> tuple[str, str]:
    """Return ``(text, source)`` for a scenario file path or a bundled name."""
    path = Path(name_or_path)
    if path.is_file():
        return path.read_text(encoding="utf-8"), str(path)
    name = str(name_or_path)
    res = resources.files("congestloc") / "scenarios" / f"{name}.ini"
    if res.is_file():
        return res.read_text(encoding="utf-8"), f"{name}.ini"
    raise ScenarioError(f"no scenario file or bundled scenario named {name!r}; bundled: {', '.join(bundled_scenarios())}")


def load_scenario(name_or_path: str | Path) -> Scenario:
    text, source = scenario_text(name_or_path)
    return parse_scenario(text, source)
