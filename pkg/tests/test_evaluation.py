import json

import numpy as np
import pytest

from mabr.config import Config, ConfigError
from mabr.evaluation import (EpisodeReport, QoERecord, aggregate, empirical_cdf, load_actors,
                             render_table, run_episode, write_cdfs)
from mabr.neuralnet import init, save_checkpoint
from mabr.traces import NetworkTrace, synthesize_content_trace
from mabr.training import AGENTS, EpisodeSpec, actor_spec


def _constant(kbps, seconds=20.0, loss=0.0):
    t = np.arange(0.0, seconds, 0.5)
    return NetworkTrace(f"const-{kbps:g}", t, np.full(t.size, kbps), loss_rate=loss)


@pytest.fixture(scope="module")
def actors():
    cfg = Config()
    return {k: init(actor_spec(cfg, k), 7 + i) for i, k in enumerate(AGENTS)}


@pytest.fixture(scope="module")
def content():
    return synthesize_content_trace("conferencing", 20.0, 3)


def test_gcc_on_tracks_rate_max_on_wide_link(content):
    cfg = Config()
    ep = EpisodeSpec(_constant(50_000.0), content, 0.0, 20.0, 0)
    rep, records, _ = run_episode("gcc_on", ep, cfg)
    assert rep.counters["frames_skipped"] == 0
    # after the ramp-up the target sits at the configured ceiling
    tail = records[-20:]
    rate = np.mean([r.bitrate_kbps for r in tail])
    assert abs(rate - cfg.gcc.rate_max) / cfg.gcc.rate_max < 0.10


def test_gcc_off_never_changes_resolution(content):
    ep = EpisodeSpec(_constant(1500.0), content, 0.0, 10.0, 1)
    rep, records, _ = run_episode("gcc_off", ep)
    assert rep.counters["resolution_changes"] == 0
    assert {r.config.resolution for r in records} == {Config().gcc.fixed_resolution}


def test_mamba_beta_keeps_capture_fps(actors, content):
    cfg = Config()
    ep = EpisodeSpec(_constant(3000.0), content, 0.0, 10.0, 2)
    rep, records, _ = run_episode("mamba_beta", ep, cfg, actors)
    assert {r.config.frame_rate for r in records} == {cfg.sim.capture_fps}
    assert rep.counters["frame_rate_changes"] == 0


def test_mamba_needs_all_actors(actors, content):
    ep = EpisodeSpec(_constant(3000.0), content, 0.0, 2.0, 0)
    with pytest.raises(ConfigError, match="fr"):
        run_episode("mamba", ep, actors={k: actors[k] for k in ("qua", "res")})
    with pytest.raises(ConfigError):
        run_episode("bogus", ep)


def test_episode_is_deterministic(actors, content):
    ep = EpisodeSpec(_constant(2500.0, loss=0.01), content, 0.0, 5.0, 11)
    a = run_episode("mamba", ep, actors=actors)[0].to_json()
    b = run_episode("mamba", ep, actors=actors)[0].to_json()
    assert a == b


def test_report_round_trip(content):
    ep = EpisodeSpec(_constant(2000.0), content, 0.0, 3.0, 4)
    rep = run_episode("gcc_on", ep)[0]
    back = EpisodeReport.from_json(rep.to_json())
    assert back.to_json() == rep.to_json()
    assert len(back.records) == 30
    assert json.loads(rep.to_json())["controller"] == "gcc_on"


def test_qoe_record_rejects_bad_values():
    with pytest.raises(ValueError):
        QoERecord(0, float("nan"), 40.0, 30.0, 0.1, 0.1, 0.0)
    with pytest.raises(ValueError):
        QoERecord(0, 1000.0, 40.0, 75.0, 0.1, 0.1, 0.0)


def test_empirical_cdf():
    x, f = empirical_cdf([3.0, 1.0, 2.0, 2.0])
    assert list(x) == [1.0, 2.0, 2.0, 3.0]
    assert list(f) == [0.25, 0.5, 0.75, 1.0]


def _report(ctl, tid, seed, q):
    recs = [QoERecord(i, 1000.0 + i, q, 60.0, 0.05, 0.1, 0.0) for i in range(4)]
    return EpisodeReport(tid, ctl, seed, recs)


def test_aggregate_pairs_by_trace_and_seed(tmp_path):
    reps = [_report("gcc_on", "a", 0, 40.0), _report("gcc_on", "b", 1, 50.0),
            _report("mamba", "a", 0, 44.0), _report("mamba", "b", 1, 51.0)]
    s = aggregate(reps, reference="gcc_on")
    assert s.episodes == {"gcc_on": 2, "mamba": 2}
    assert s.means["mamba"]["quality"] == pytest.approx(47.5)
    assert s.deltas[("mamba", "gcc_on")]["quality"] == pytest.approx(2.5)
    table = render_table(s)
    assert "quality (proxy)" in table and "mamba vs gcc_on" in table
    assert "+5.6%" in table
    paths = write_cdfs(s, tmp_path)
    assert len(paths) == 8
    assert paths[0].read_text().startswith("value,fraction\n")


def test_load_actors(tmp_path, actors):
    save_checkpoint(tmp_path / "team.ckpt", dict(actors), {"stage": "team"})
    loaded = load_actors(tmp_path / "team.ckpt")
    assert set(loaded) == set(AGENTS)
    with pytest.raises(ConfigError):
        load_actors(tmp_path / "missing.ckpt")
