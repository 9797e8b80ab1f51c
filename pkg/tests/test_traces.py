import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mabr.traces import (CONTENT_PROFILES, PROFILE_RANGES, ContentTrace, EmptyTraceError,
                         NetworkTrace, TraceError, TraceParseError, load_content_trace,
                         load_manifest, load_network_trace, mixed_content, resample,
                         save_network_trace, split_traces, step_down_trace,
                         synthesize_content_trace, synthesize_dataset, synthesize_network_trace,
                         write_manifest)


def test_zero_order_hold_and_wrap():
    tr = NetworkTrace("t", [0.0, 1.0, 2.0], [100.0, 200.0, 300.0])
    assert tr.duration == 3.0
    assert tr.bandwidth_at(0.5) == 100.0
    assert tr.bandwidth_at(1.0) == 200.0
    assert tr.bandwidth_at(3.5) == 100.0


def test_resample_time_weighted():
    tr = NetworkTrace("t", [0.0, 1.0], [1000.0, 3000.0])
    out = resample(tr, 2.0)
    assert out.bandwidth.tolist() == [2000.0]
    out = resample(tr, 0.5)
    assert out.bandwidth.tolist() == [1000.0, 1000.0, 3000.0, 3000.0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 20000), min_size=1, max_size=30), st.floats(0.1, 3.0))
def test_resample_preserves_volume(bw, g):
    tr = NetworkTrace("t", np.arange(len(bw)) * 0.5, bw)
    out = resample(tr, g)
    knots = np.append(out.times, tr.duration)
    volume = float(np.sum(out.bandwidth * np.diff(knots)))
    assert math.isclose(volume, tr.integral(0, tr.duration), rel_tol=1e-9, abs_tol=1e-6)


def test_load_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0,100\n1,abc\n")
    with pytest.raises(TraceParseError) as exc:
        load_network_trace(p)
    assert exc.value.lineno == 2
    p.write_text("0,100\n0,200\n")
    with pytest.raises(TraceParseError):
        load_network_trace(p)
    p.write_text("# only a comment\n")
    with pytest.raises(EmptyTraceError):
        load_network_trace(p)
    p.write_text("0,-5\n")
    with pytest.raises(TraceParseError):
        load_network_trace(p)
    with pytest.raises(TraceError):
        load_network_trace(p, format="mahimahi")


def test_save_load_roundtrip(tmp_path):
    tr = synthesize_network_trace("moderate", 10, 3)
    save_network_trace(tr, tmp_path / "a.csv")
    back = load_network_trace(tmp_path / "a.csv")
    np.testing.assert_allclose(back.bandwidth, tr.bandwidth, rtol=1e-5)
    write_manifest(tmp_path / "m.txt", [tr], ["a.csv"])
    (loaded,) = load_manifest(tmp_path / "m.txt")
    assert loaded.family == "moderate" and loaded.base_rtt_ms == 40.0


def test_content_loader(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("0,30,5\n0.1,32,6\n")
    c = load_content_trace(p)
    assert c.window_mean(0, 0.2) == (31.0, 5.5)


def test_split_counts():
    for n in (2, 3, 5, 10, 11, 60):
        s = split_traces([str(i) for i in range(n)], seed=4)
        assert len(s.train) == min(max(math.floor(0.8 * n + 0.5), 1), n - 1)
        assert sorted(s.train + s.test, key=int) == [str(i) for i in range(n)]
    assert split_traces(list("abcdef"), 1) == split_traces(list("abcdef"), 1)
    with pytest.raises(TraceError):
        split_traces(["only"], 0)


@pytest.mark.parametrize("profile", CONTENT_PROFILES)
def test_content_profiles_stay_in_band(profile):
    c = synthesize_content_trace(profile, 60, 2)
    si_lo, si_hi, ti_lo, ti_hi = PROFILE_RANGES[profile]
    assert si_lo <= c.si.min() and c.si.max() <= si_hi
    assert ti_lo <= c.ti.min() and c.ti.max() <= ti_hi


def test_synthesis_is_deterministic():
    a = synthesize_network_trace("volatile", 30, 7)
    b = synthesize_network_trace("volatile", 30, 7)
    assert np.array_equal(a.bandwidth, b.bandwidth)
    assert not np.array_equal(a.bandwidth, synthesize_network_trace("volatile", 30, 8).bandwidth)
    m = mixed_content(40, 1)
    assert math.isclose(m.duration, 40.0)
    ds = synthesize_dataset(6, 20, 0)
    assert [t.family for t in ds[:3]] == ["stable", "moderate", "volatile"]


def test_step_down_shape():
    tr = step_down_trace()
    assert tr.bandwidth_at(6.9) == 8000.0 and tr.bandwidth_at(7.0) == 2000.0


def test_invalid_traces():
    with pytest.raises(EmptyTraceError):
        NetworkTrace("e", [], [])
    with pytest.raises(TraceError):
        NetworkTrace("n", [0, 1], [1, -1])
    with pytest.raises(TraceError):
        ContentTrace("c", [0, 0], [1, 1], [1, 1])
