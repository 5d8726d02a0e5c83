import io
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestloc.metrics import sustained_throughput
from congestloc.model import SITES, Schema, group_by_month, ingest_csv, write_records
from congestloc.pipeline import analyze
from congestloc.scenario import (
    LinkProcess,
    Region,
    ScenarioError,
    bundled_scenarios,
    diurnal_load,
    parse_scenario,
    scenario_text,
)
from congestloc.simulator import path_throughput, read_truth, simulate, write_truth

from conftest import ts


def link(name, bps, sigma=0.0, region=Region.MIDDLE_MILE):
    return LinkProcess(name, region, bps, noise_sigma=sigma)


def test_path_throughput_examples():
    assert path_throughput([link("a", 10e6)], 0, 20e6) == 10e6
    assert path_throughput([link("a", 50e6), link("b", 8e6), link("c", 30e6)], 0, 20e6) == 8e6
    assert path_throughput([link("a", 50e6), link("b", 30e6)], 0, 10e6) == 10e6
    with pytest.raises(ValueError):
        path_throughput([], 0, 1e6)


@given(st.lists(st.floats(1e5, 1e9), min_size=1, max_size=6), st.floats(1e5, 1e9))
def test_conservation(caps, tier):
    x = path_throughput([link(str(i), c) for i, c in enumerate(caps)], 0, tier)
    assert x <= tier and all(x <= c for c in caps)


def test_share_positive_under_load():
    lp = LinkProcess("x", Region.MIDDLE_MILE, 10e6, diurnal_amplitude=0.9)
    t = np.arange(ts("2011-03-01T00:00:00Z"), ts("2011-03-08T00:00:00Z"), 600)
    assert (lp.share(t) > 0).all()
    load = diurnal_load(t)
    assert load.max() <= 1.0 and load.min() >= 0.0
    peak_hour = (t[np.argmax(load)] % 86400) // 3600
    assert peak_hour == 21


def small(name, count=12, **overrides):
    text, source = scenario_text(name)
    text = re.sub(r"(?m)^count = \d+", f"count = {count}", text)
    for key, value in overrides.items():
        text = re.sub(rf"(?m)^{key} = .*$", f"{key} = {value}", text)
    return parse_scenario(text, source)


def test_bundled_scenarios_listed():
    assert {"unconstrained", "initial-bottleneck", "website-edge", "middle-mile", "two-population"} <= set(
        bundled_scenarios())


def test_unconstrained_is_always_at_tier():
    sc = small("unconstrained")
    res = simulate(sc)
    tier = 10e6
    assert all(sustained_throughput(r) == tier for r in res.benchmark)
    assert all(not g.rc_true and not g.tis_true and g.tight_fraction == 0 for g in res.truth)


def _ingest(records, schema):
    buf = io.StringIO()
    write_records(buf, records, schema)
    return ingest_csv(io.StringIO(buf.getvalue()), schema)


def test_round_trip_has_no_rejects():
    res = simulate(small("initial-bottleneck", count=4))
    for records, schema in ((res.benchmark, Schema.BENCHMARK), (res.website, Schema.WEBSITE),
                            (res.connections, Schema.CONNECTIONS)):
        back, rej = _ingest(records, schema)
        assert rej == [] and back == records
    buf = io.StringIO()
    write_truth(buf, res.truth)
    assert read_truth(io.StringIO(buf.getvalue())) == res.truth


def test_determinism_and_order_independence():
    sc = small("two-population", count=6)
    a, b = simulate(sc), simulate(sc)
    assert a == b
    reordered = simulate(type(sc)(**{**sc.__dict__, "connections": tuple(reversed(sc.connections))}))
    key = lambda r: (r.unit_id, r.start_time)  # noqa: E731
    assert sorted(a.benchmark, key=key) == sorted(reordered.benchmark, key=key)
    assert sorted(a.truth, key=lambda g: g.key) == sorted(reordered.truth, key=lambda g: g.key)


def test_seed_changes_output():
    a = simulate(small("initial-bottleneck", count=2))
    b = simulate(small("initial-bottleneck", count=2, seed=5))
    assert a.benchmark != b.benchmark


def _verdicts(res):
    months, _ = group_by_month([*res.benchmark, *res.website], res.connections)
    results, excluded = analyze(months)
    return results, excluded


def test_website_edge_not_tight_and_not_detected():
    res = simulate(small("website-edge", count=8))
    assert all(g.tight_fraction == 0 and not g.tis_true for g in res.truth)
    results, _ = _verdicts(res)
    assert results and not any(r.tis.tight for r in results)


@pytest.mark.parametrize("sigma,floor", [(0, 0.8), (0.1, 0.6)])
def test_middle_mile_fools_correlation(sigma, floor):
    res = simulate(small("middle-mile", count=8, noise_sigma=sigma))
    assert all(not g.tis_true for g in res.truth)
    results, _ = _verdicts(res)
    for r in results:
        assert all(c is not None and c > floor for c in r.tis.correlations.values())
        assert r.tis.tight


def test_initial_bottleneck_labels_and_detection():
    res = simulate(small("initial-bottleneck", count=8))
    assert all(g.tis_true for g in res.truth)
    results, _ = _verdicts(res)
    assert all(r.tis.tight for r in results)


def test_sampling_schedule():
    sc = small("initial-bottleneck", count=1, missing_prob=0.0)
    res = simulate(sc)
    times = [r.start_time for r in res.benchmark]
    assert np.all(np.diff(times) == 7200)
    assert len(res.website) == len(times) * len(SITES)
    assert times[0] - sc.start < 7200


BASE = """
[scenario]
name = t
seed = 1
start = 2011-03
months = 1

[link.access]
region = INITIAL_SEGMENT
capacity_x_tier = 2

[population.p]
count = 1
isp_ids = a
technology = DSL
tier_bps = 1e6
initial_segment = access
"""


@pytest.mark.parametrize(
    "edit,key",
    [
        (("seed = 1", "sead = 1"), "sead"),
        (("capacity_x_tier = 2", "capacity_x_tier = two"), "capacity_x_tier"),
        (("region = INITIAL_SEGMENT", "region = NOWHERE"), "region"),
        (("count = 1", "count = -1"), "count"),
        (("initial_segment = access", "initial_segment = missing"), "initial_segment"),
        (("[population.p]", "[crowd.p]"), "crowd.p"),
    ],
)
def test_malformed_scenario_names_key(edit, key):
    parse_scenario(BASE)
    with pytest.raises(ScenarioError, match=re.escape(key)):
        parse_scenario(BASE.replace(*edit))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_label_consistency_when_initial_segment_is_slack(seed):
    sc = small("middle-mile", count=1, seed=seed)
    res = simulate(sc)
    assert all(g.tight_fraction == 0 for g in res.truth)
