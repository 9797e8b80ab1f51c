import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mabr.codec import EncodedFrame, EncoderConfig
from mabr.config import GCCConfig
from mabr.gcc import (NORMAL, OVERUSE, UNDERUSE, BaselineController, DelayController,
                      LeakyBucket, LossController, ResolutionTable, bucket_step, combine,
                      delay_update, loss_update, map_resolution, merge_feedback)
from mabr.netsim import LinkFeedback


def test_loss_rules():
    ctl = LossController(1000.0)
    assert loss_update(ctl, 0.2).rate == pytest.approx(900.0)
    assert loss_update(ctl, 0.0).rate == pytest.approx(1050.0)
    assert loss_update(ctl, 0.05).rate == 1000.0
    assert loss_update(LossController(9900.0), 0.0).rate == 10000.0
    with pytest.raises(ValueError):
        loss_update(ctl, 1.5)


def test_delay_overuse_needs_two_intervals():
    ctl = DelayController(2000.0, last_rtt=0.05)
    ctl = delay_update(ctl, [0.08], 1800.0)
    assert ctl.state == NORMAL and ctl.over_count == 1
    ctl = delay_update(ctl, [0.11], 1800.0)
    assert ctl.state == OVERUSE
    assert ctl.rate == pytest.approx(0.85 * 1800.0)


def test_delay_underuse_holds_and_normal_grows():
    ctl = DelayController(2000.0, last_rtt=0.2)
    down = delay_update(ctl, [0.1], 1500.0)
    assert down.state == UNDERUSE and down.rate == 2000.0
    flat = delay_update(DelayController(2000.0, last_rtt=0.1), [0.1], 1500.0)
    assert flat.state == NORMAL and flat.rate == pytest.approx(2100.0)
    with pytest.raises(ValueError):
        delay_update(ctl, [], 1.0)
    with pytest.raises(ValueError):
        DelayController(1.0, threshold=0.0)


def test_threshold_stays_clamped():
    ctl = DelayController(2000.0, last_rtt=0.0)
    cfg = GCCConfig()
    for rtt in [0.5, 0.0] * 500:
        ctl = delay_update(ctl, [rtt], 1000.0, cfg)
        assert cfg.threshold_min_ms / 1e3 <= ctl.threshold <= cfg.threshold_max_ms / 1e3


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e6), st.floats(1e-3, 1e6))
def test_combine_is_min(a, b):
    assert combine(a, b) == min(a, b)


def test_combine_rejects_nonpositive():
    with pytest.raises(ValueError):
        combine(0.0, 5.0)


def test_resolution_table():
    t = ResolutionTable.parse("0:540p,1500:720p,3500:1080p,6500:1440p")
    assert map_resolution(t, 100) == "540p"
    assert map_resolution(t, 1500) == "720p"
    assert map_resolution(t, 7000) == "1440p"
    with pytest.raises(ValueError):
        ResolutionTable.parse("0:1080p,100:720p")
    with pytest.raises(ValueError):
        ResolutionTable.parse("10:540p,5:720p")


def test_bucket():
    b, skip = bucket_step(LeakyBucket(), 20000, 0.1, 1000.0)
    assert b.level == pytest.approx(7500.0) and skip
    b, skip = bucket_step(b, 0, 0.1, 1000.0)
    assert b.level == 0.0 and not skip


def _fb(rtt, loss=0.0, delivered=12500):
    return LinkFeedback(rtt, loss, delivered, 0.05, 30.0, delivered * 8 / 100.0, (rtt,), False, 10,
                        int(10 * loss))


def test_controller_aggregates_feedback():
    ctl = BaselineController(GCCConfig(feedback_interval=0.5))
    for _ in range(4):
        ctl.update(_fb(0.04))
    assert ctl.updates == 0 and ctl.target == 1500.0
    ctl.update(_fb(0.04))
    assert ctl.updates == 1 and ctl.target == pytest.approx(1575.0)


def test_merge_feedback():
    m = merge_feedback([_fb(0.04, 0.1), _fb(0.06, 0.3)], 0.1)
    assert m.interval_rtt_mean == pytest.approx(0.05)
    assert m.interval_loss_rate == pytest.approx(0.2)
    assert m.received_kbps == pytest.approx(1000.0)


def test_skipper_only_without_resolution_adaptation():
    frames = [EncodedFrame(i, i / 60, 40000, 50.0, EncoderConfig(20, "1080p", 60)) for i in range(6)]
    on = BaselineController(resolution_adaptation=True)
    assert on.frame_filter(list(frames)) == frames
    off = BaselineController(resolution_adaptation=False)
    kept = off.frame_filter(list(frames))
    assert len(kept) < 6 and off.skipped == 6 - len(kept)
