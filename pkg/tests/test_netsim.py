import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mabr.codec import EncodedFrame, EncoderConfig
from mabr.netsim import (ChannelState, IntervalWindow, Packet, ReceiverState, compute_feedback,
                         packetize, receiver_ingest, step_channel)

CFG = EncoderConfig(25, "1080p", 30)


def _frame(fid, size, t=0.0, key=False):
    return EncodedFrame(fid, t, size, 50.0, CFG, key)


def test_packetize_sizes():
    pk = packetize(_frame(0, 2500), 1200)
    assert [p.size for p in pk] == [1200, 1200, 100]
    assert all(p.packets_in_frame == 3 for p in pk)
    with pytest.raises(ValueError):
        packetize(_frame(0, 0), 1200)


def test_single_packet_timing():
    # 1200 bytes at 960 kbps = 10 ms of serialization
    ch = ChannelState(bandwidth_now=960.0, prop_delay=0.02)
    _, out = step_channel(ch, 0.02, [Packet(0, 0, 1200, 0.0)])
    (p, deliver, qd), = out
    assert deliver == pytest.approx(0.03)
    assert qd == 0.0


def test_queueing_delay_of_second_packet():
    ch = ChannelState(bandwidth_now=960.0, prop_delay=0.0)
    _, out = step_channel(ch, 0.05, [Packet(0, 0, 1200, 0.0), Packet(0, 1, 1200, 0.0, 2)])
    assert [round(d, 9) for _, d, _ in out] == [0.01, 0.02]
    assert out[1][2] == pytest.approx(0.01)


def test_drop_tail_when_full():
    ch = ChannelState(bandwidth_now=100.0, queue_ms=100.0, mtu=1200)
    pk = [Packet(0, i, 1200, 0.0, 5) for i in range(5)]
    step_channel(ch, 0.01, pk)
    assert ch.dropped_packets == 4 and ch.queue_bytes + ch.delivered_bytes == 1200


def test_zero_bandwidth_holds_queue():
    ch = ChannelState(bandwidth_now=0.0)
    _, out = step_channel(ch, 0.01, [Packet(0, 0, 500, 0.0)])
    assert out == [] and ch.queue_bytes == 500


def test_receiver_decode_order_and_keyframe_recovery():
    rx = ReceiverState()
    # frame 0 ok, frame 1 lost, frame 2 complete but undecodable, frame 3 keyframe
    def pkt(fid, key=False):
        return (Packet(fid, 0, 100, 0.0, 1, 0.0, key), 0.05, 0.0)
    receiver_ingest(rx, [pkt(0), pkt(2), pkt(3, key=True)], now=0.1)
    assert rx.played_total == 2
    assert rx.last_lost_frame == 1 and rx.chain_ok


def test_feedback_carries_previous_when_stale():
    w = IntervalWindow(prop_delay=0.02, queue_delays=[0.01, 0.03], delivered_bytes=1250,
                       sent_packets=4, dropped_packets=1, frame_delays=[0.05], played_frames=3)
    fb = compute_feedback(w, 0.1)
    assert fb.interval_rtt_mean == pytest.approx(0.06)
    assert fb.interval_loss_rate == 0.25
    assert fb.received_kbps == pytest.approx(100.0)
    assert fb.playback_fps == pytest.approx(30.0)
    empty = compute_feedback(IntervalWindow(prop_delay=0.02), 0.1, fb)
    assert empty.stale and empty.interval_rtt_mean == fb.interval_rtt_mean
    assert empty.frame_delay == fb.frame_delay


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 5000), st.integers(0, 4), st.integers(1, 3000)),
                min_size=1, max_size=60),
       st.floats(0, 0.3))
def test_channel_never_serves_faster_than_link(steps, loss):
    ch = ChannelState(prop_delay=0.01, random_loss=loss, rng=np.random.default_rng(0))
    fid = 0
    for bw, n, size in steps:
        ch.bandwidth_now = bw
        before = ch.drained_bytes
        arrivals = [Packet(fid + i, 0, size, ch.now) for i in range(n)]
        fid += n
        step_channel(ch, 0.01, arrivals)
        assert ch.drained_bytes - before <= bw * 125.0 * 0.01 + 1e-6
        assert ch.injected_bytes == ch.delivered_bytes + ch.dropped_bytes + ch.queue_bytes
