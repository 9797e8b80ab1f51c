"""Packet-level sender-to-receiver path.

A single FIFO bottleneck drains at the trace bandwidth, tail-drops arrivals
that do not fit, optionally drops survivors at random, and then adds a fixed
propagation delay.  The receiver reassembles frames and plays them in strict
decode order: a frame is shown only if it is complete and its predecessor
chain is intact, or it is a keyframe.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .codec import EncodedFrame


@dataclass(slots=True)
class Packet:
    frame_id: int
    index_in_frame: int
    size: int
    send_time: float
    packets_in_frame: int = 1
    capture_time: float = 0.0
    keyframe: bool = False


def packetize(frame: EncodedFrame, mtu: int) -> list[Packet]:
    if frame.size <= 0:
        raise ValueError("frame size must be positive")
    n = math.ceil(frame.size / mtu)
    sizes = [mtu] * (n - 1) + [frame.size - mtu * (n - 1)]
    return [Packet(frame.frame_id, i, s, frame.capture_time, n, frame.capture_time, frame.keyframe)
            for i, s in enumerate(sizes)]


@dataclass
class ChannelState:
    bandwidth_now: float = 0.0          # kbps
    prop_delay: float = 0.02            # seconds, one way
    random_loss: float = 0.0
    queue_ms: float = 500.0
    mtu: int = 1200
    now: float = 0.0
    queue: deque = field(default_factory=deque)
    queue_bytes: int = 0
    head_progress: float = 0.0          # bytes of the head packet already serialized
    head_start: float | None = None     # when the head packet entered service
    injected_bytes: int = 0
    delivered_bytes: int = 0
    dropped_bytes: int = 0
    sent_packets: int = 0
    dropped_packets: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @property
    def capacity_bytes(self) -> float:
        return max(self.queue_ms / 1000.0 * self.bandwidth_now * 125.0, float(self.mtu))

    @property
    def drained_bytes(self) -> float:
        """Bytes serialized onto the link, counting the partial head packet."""
        return self.delivered_bytes + self.head_progress


def _serve(ch: ChannelState, t: float, end: float, rate: float, out: list) -> float:
    """Serialize queued packets from server time ``t`` up to ``end``."""
    queue = ch.queue
    while queue and t < end:
        p = queue[0]
        if ch.head_start is None:
            if p.send_time >= end:
                break
            t = max(t, p.send_time)
            ch.head_start = t
        if rate <= 0:
            return end
        remaining = p.size - ch.head_progress
        done = t + remaining / rate
        if done <= end + 1e-12:
            queue.popleft()
            ch.queue_bytes -= p.size
            ch.delivered_bytes += p.size
            out.append((p, done + ch.prop_delay, ch.head_start - p.send_time))
            ch.head_progress = 0.0
            ch.head_start = None
            t = done
        else:
            ch.head_progress += (end - t) * rate
            t = end
    return t


def step_channel(state: ChannelState, tick: float, arrivals: list[Packet]) -> tuple[ChannelState, list]:
    """Advance the bottleneck by one tick.

    Returns ``(state, delivered)`` where each delivery is
    ``(packet, deliver_time, queueing_delay)``.  The state is updated in place.
    """
    if tick <= 0:
        raise ValueError("tick must be positive")
    start, end = state.now, state.now + tick
    rate = state.bandwidth_now * 125.0    # kbps -> bytes/s
    out: list = []
    t = _serve(state, start, end, rate, out)
    cap = state.capacity_bytes
    lossy = state.random_loss > 0
    for p in arrivals:
        state.injected_bytes += p.size
        state.sent_packets += 1
        if state.queue_bytes + p.size > cap or (lossy and state.rng.random() < state.random_loss):
            state.dropped_bytes += p.size
            state.dropped_packets += 1
            continue
        state.queue.append(p)
        state.queue_bytes += p.size
    if arrivals:
        _serve(state, t, end, rate, out)
    state.now = end
    return state, out


@dataclass
class _FrameSlot:
    expected: int
    capture_time: float
    keyframe: bool
    received: int = 0
    complete_time: float | None = None


@dataclass
class ReceiverState:
    frames: dict = field(default_factory=dict)
    next_frame: int = 0
    chain_ok: bool = True
    last_decodable_frame: int = -1
    played_frames_in_interval: int = 0
    played_total: int = 0
    completed_delays: list = field(default_factory=list)
    last_lost_frame: int = -1

    def reset_interval(self) -> None:
        self.played_frames_in_interval = 0
        self.completed_delays = []


def _resolve(rx: ReceiverState, upto: int) -> None:
    """Decide frames in decode order; frames below ``upto`` that are still
    incomplete can no longer complete (FIFO path) and count as lost."""
    while True:
        slot = rx.frames.get(rx.next_frame)
        if slot is not None and slot.complete_time is not None:
            if rx.chain_ok or slot.keyframe:
                rx.chain_ok = True
                rx.last_decodable_frame = rx.next_frame
                rx.played_frames_in_interval += 1
                rx.played_total += 1
        elif rx.next_frame < upto:
            rx.chain_ok = False
            rx.last_lost_frame = rx.next_frame
        else:
            return
        rx.frames.pop(rx.next_frame, None)
        rx.next_frame += 1


def receiver_ingest(state: ReceiverState, delivered: list, now: float) -> ReceiverState:
    """Feed packets delivered by ``now`` (in delivery order) to the receiver."""
    for item in delivered:
        p, t = item[0], item[1]
        if t > now + 1e-12:
            raise ValueError("packet delivered in the future")
        if p.frame_id < state.next_frame:
            continue
        if p.frame_id > state.next_frame:
            _resolve(state, p.frame_id)
        slot = state.frames.get(p.frame_id)
        if slot is None:
            slot = state.frames[p.frame_id] = _FrameSlot(p.packets_in_frame, p.capture_time, p.keyframe)
        slot.received += 1
        if slot.received == slot.expected:
            slot.complete_time = t
            state.completed_delays.append(t - slot.capture_time)
            _resolve(state, p.frame_id)
    return state


@dataclass
class LinkFeedback:
    interval_rtt_mean: float
    interval_loss_rate: float
    delivered_bytes: int
    frame_delay: float
    playback_fps: float = 0.0
    received_kbps: float = 0.0
    rtt_samples: tuple = ()
    stale: bool = False
    sent_packets: int = 0
    dropped_packets: int = 0


@dataclass
class IntervalWindow:
    """Raw per-interval observations feeding :func:`compute_feedback`."""
    prop_delay: float
    queue_delays: list = field(default_factory=list)
    delivered_bytes: int = 0
    sent_packets: int = 0
    dropped_packets: int = 0
    frame_delays: list = field(default_factory=list)
    played_frames: int = 0


def compute_feedback(window: IntervalWindow, interval: float,
                     previous: LinkFeedback | None = None) -> LinkFeedback:
    if interval <= 0:
        raise ValueError("interval must be positive")
    base = 2.0 * window.prop_delay
    loss = window.dropped_packets / window.sent_packets if window.sent_packets else 0.0
    if previous is None:
        previous = LinkFeedback(base, 0.0, 0, window.prop_delay)
    stale = not window.queue_delays
    if stale:
        rtt, samples = previous.interval_rtt_mean, ()
    else:
        samples = tuple(base + q for q in window.queue_delays)
        rtt = base + float(np.mean(window.queue_delays))
    delay = float(np.mean(window.frame_delays)) if window.frame_delays else previous.frame_delay
    return LinkFeedback(
        interval_rtt_mean=rtt,
        interval_loss_rate=loss,
        delivered_bytes=window.delivered_bytes,
        frame_delay=delay,
        playback_fps=window.played_frames / interval,
        received_kbps=window.delivered_bytes * 8.0 / 1000.0 / interval,
        rtt_samples=samples,
        stale=stale,
        sent_packets=window.sent_packets,
        dropped_packets=window.dropped_packets,
    )
