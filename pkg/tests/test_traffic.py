import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwiab.traffic import (CountTrace, DemandSeries, TraceError, augment, dump_trace, load_trace, parse_trace,
                           site_map_from_scenario, synthetic_week, to_demand)

SMALL = """timestamp,site_id,count
0,a,900
0,b,0
900,a,1800
900,b,90
"""


def test_parse_small_trace():
    tr = parse_trace(SMALL)
    assert tr.sites == ["a", "b"]
    assert tr.resolution == 900.0
    assert tr.counts.tolist() == [[900, 0], [1800, 90]]
    assert parse_trace(dump_trace(tr)).counts.tolist() == tr.counts.tolist()


@pytest.mark.parametrize("text, pattern", [
    ("0,a,1\n900,a,-3\n", "negative"),
    ("0,a,1\n0,a,2\n", "non-increasing"),
    ("0,a\n", "3 columns"),
    ("x,a,1\n", "malformed"),
    ("0,,1\n", "empty site"),
    ("0,a,1\n900,a,1\n0,b,1\n", "time grid"),
    ("0,a,1\n900,a,1\n2700,a,1\n", "irregular"),
    ("timestamp,site_id,count\n", "no rows"),
])
def test_parse_errors(text, pattern):
    with pytest.raises(TraceError, match=pattern):
        parse_trace(text)


def test_error_reports_line():
    with pytest.raises(TraceError, match="line 3"):
        parse_trace("timestamp,site_id,count\n0,a,1\n900,a,-1\n")


def test_missing_trace_file():
    with pytest.raises(TraceError, match="cannot read"):
        load_trace("/no/such/trace.csv")


def test_packet_to_rate():
    # 1000 packets of 12000 bits in one second is 12 Mbit/s
    tr = CountTrace(np.array([0]), ["s"], np.array([[1000.0]]), 1.0)
    d = to_demand(tr, 12000, {"v": ("s", 1.0)})
    assert d.at(0).tolist() == [12e6]
    assert d.aggregate.tolist() == [12e6]


def test_to_demand_errors():
    tr = parse_trace(SMALL)
    with pytest.raises(TraceError, match="unmapped"):
        to_demand(tr, 12000, {"v": ("zzz", 1.0)})
    with pytest.raises(TraceError):
        to_demand(tr, 0, {"v": ("a", 1.0)})


def test_augment_conserves_window_totals():
    tr = parse_trace(SMALL)
    fine = augment(tr, seed=1)
    assert fine.resolution == 1.0 and len(fine) == 1800
    sums = fine.counts.reshape(2, 900, 2).sum(axis=1)
    np.testing.assert_allclose(sums, tr.counts, rtol=1e-12, atol=1e-9)


@given(st.lists(st.integers(0, 10 ** 6), min_size=2, max_size=12), st.integers(0, 1000),
       st.floats(0.0, 0.5))
def test_augment_conservation_property(counts, seed, jitter):
    tr = CountTrace(np.arange(len(counts)) * 900, ["s"], np.array(counts, dtype=float)[:, None], 900.0)
    fine = augment(tr, seed, jitter)
    sums = fine.counts.reshape(len(counts), 900).sum(axis=1)
    np.testing.assert_allclose(sums, counts, rtol=1e-9, atol=1e-6)
    assert (fine.counts >= 0).all()


def test_augment_is_seeded():
    tr = parse_trace(SMALL)
    assert np.array_equal(augment(tr, 3).counts, augment(tr, 3).counts)
    assert not np.array_equal(augment(tr, 3).counts, augment(tr, 4).counts)
    with pytest.raises(TraceError):
        augment(augment(tr, 0))


def test_demand_series_views():
    d = DemandSeries.constant(["a", "b"], [1.0, 2.0], 4)
    assert d.aggregate.tolist() == [3.0] * 4
    assert d.by_terminal(2) == {"a": 1.0, "b": 2.0}
    assert len(d.slice(1, 3)) == 2
    assert d.scaled(2).aggregate.tolist() == [6.0] * 4
    f = DemandSeries.from_aggregate(["a", "b"], [0.25, 0.75], [4.0, 8.0])
    assert f.block(0, 2).tolist() == [[1.0, 3.0], [2.0, 6.0]]
    buf = io.StringIO()
    f.export(buf)
    assert buf.getvalue().splitlines()[:2] == ["tick,terminal_id,bits_per_second", "0,a,1.0"]


def test_bundled_trace(bundled, bundled_trace):
    assert bundled_trace.resolution == 900.0
    assert len(bundled_trace) == 7 * 96
    sm = site_map_from_scenario(bundled)
    assert len(sm) == 25
    assert {s for s, _ in sm.values()} <= set(bundled_trace.sites)


def test_bundled_demand_peak(demand_by_seed):
    d = demand_by_seed(0)
    assert len(d) == 604800
    assert 1.4e9 < d.aggregate.max() < 1.9e9


def test_synthetic_week_shape():
    tr = synthetic_week(["a"], [1000.0], days=2)
    assert tr.counts.shape == (192, 1)
    hours = np.arange(96) / 4
    day = tr.counts[:96, 0]
    assert hours[day.argmax()] == pytest.approx(15, abs=1.5)
    assert hours[day.argmin()] == pytest.approx(3, abs=1.5)
