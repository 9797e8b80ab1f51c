"""One streaming session: encoder -> bottleneck -> receiver, interval by interval.

The caller supplies an :class:`EncoderConfig` per interval (0.1 s by
default); the session encodes, packetizes, runs the channel at tick
resolution, and returns an :class:`IntervalRecord` carrying everything a
controller or a report needs.  Feedback is reliable and arrives at interval
boundaries.
"""

from __future__ import annotations

import dataclasses
from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .codec import EncodedFrame, EncoderConfig, RateQualityModel, frame_count
from .config import CodecConfig, SimConfig
from .netsim import (ChannelState, IntervalWindow, LinkFeedback, ReceiverState,
                     compute_feedback, packetize, receiver_ingest, step_channel)
from .traces import ContentTrace, NetworkTrace

FrameFilter = Callable[[list[EncodedFrame]], list[EncodedFrame]]


@dataclass
class IntervalRecord:
    index: int
    start: float
    end: float
    config: EncoderConfig
    si: float
    ti: float
    frames_sent: int
    frames_skipped: int
    keyframes: int
    sent_bytes: int
    bitrate_kbps: float
    quality: float
    spatial_quality: float
    played: int
    playback_fps: float
    frame_delay: float
    rtt: float
    loss: float
    delivered_bytes: int
    received_kbps: float
    bandwidth_kbps: float
    stale: bool
    feedback: LinkFeedback
    target_kbps: float | None = None


class Session:
    def __init__(self, net: NetworkTrace, content: ContentTrace, sim: SimConfig | None = None,
                 codec: RateQualityModel | CodecConfig | None = None, seed: int = 0,
                 start: float = 0.0, record_events: bool = False):
        self.sim = sim or SimConfig()
        self.model = codec if isinstance(codec, RateQualityModel) else RateQualityModel(codec)
        self.net = net
        self.content = content
        self.offset = start
        ss = np.random.SeedSequence(seed)
        codec_seed, loss_seed = ss.spawn(2)
        self.rng = np.random.default_rng(codec_seed)
        loss = net.loss_rate if net.loss_rate > 0 else self.sim.random_loss
        self.channel = ChannelState(prop_delay=net.base_rtt_ms / 2000.0, random_loss=loss,
                                    queue_ms=self.sim.queue_ms, mtu=self.sim.mtu,
                                    rng=np.random.default_rng(loss_seed))
        self.receiver = ReceiverState()
        self.in_flight: deque = deque()
        self.t = 0.0
        self.index = 0
        self.next_frame_id = 0
        self.last_resolution: str | None = None
        self.last_keyframe_id = -1
        self.feedback: LinkFeedback | None = None
        self.history: list[IntervalRecord] = []
        self.events: list[tuple] | None = [] if record_events else None
        self._tick_count = 0

    def content_at(self, start: float, end: float) -> tuple[float, float]:
        return self.content.window_mean(self.offset + start, self.offset + end)

    def _keyframe_requested(self) -> bool:
        rx = self.receiver
        # re-request when the previous recovery keyframe was itself lost
        if not self.sim.keyframe_on_loss or rx.chain_ok:
            return False
        return self.last_keyframe_id <= rx.last_lost_frame

    def step(self, cfg: EncoderConfig, frame_filter: FrameFilter | None = None,
             target_kbps: float | None = None) -> IntervalRecord:
        sim = self.sim
        start, end = self.t, self.t + sim.interval
        si, ti = self.content_at(start, end)
        restart = self.last_resolution is not None and cfg.resolution != self.last_resolution
        want_key = restart or self._keyframe_requested()
        frames = self.model.encode_interval(cfg, si, ti, start, sim.interval, self.rng,
                                            restart=want_key)
        candidates = len(frames)
        if frame_filter is not None and frames:
            kept = frame_filter(frames)
            if want_key and kept and not kept[0].keyframe:
                kept[0] = dataclasses.replace(
                    kept[0], keyframe=True, size=int(kept[0].size * self.model.cfg.keyframe_factor))
            frames = kept
        frames = [dataclasses.replace(f, frame_id=self.next_frame_id + i) for i, f in enumerate(frames)]
        self.next_frame_id += len(frames)
        if frames:
            self.last_resolution = cfg.resolution
        keyframes = sum(f.keyframe for f in frames)
        if keyframes:
            self.last_keyframe_id = max(f.frame_id for f in frames if f.keyframe)

        packets = [p for f in frames for p in packetize(f, sim.mtu)]
        window = IntervalWindow(prop_delay=self.channel.prop_delay)
        sent0, dropped0 = self.channel.sent_packets, self.channel.dropped_packets
        self.receiver.reset_interval()
        n_ticks = int(round(sim.interval / sim.tick))
        pi = 0
        bw_sum = 0.0
        for k in range(n_ticks):
            t0 = start + k * sim.tick
            t1 = t0 + sim.tick
            arrivals = []
            while pi < len(packets) and packets[pi].send_time < t1 - 1e-12:
                arrivals.append(packets[pi])
                pi += 1
            ch = self.channel
            ch.now = t0
            ch.bandwidth_now = self.net.bandwidth_at(self.offset + t0)
            bw_sum += ch.bandwidth_now
            d0, x0 = ch.delivered_bytes, ch.dropped_bytes
            _, out = step_channel(ch, sim.tick, arrivals)
            self.in_flight.extend(out)
            ready = []
            while self.in_flight and self.in_flight[0][1] <= t1 + 1e-12:
                ready.append(self.in_flight.popleft())
            if ready:
                receiver_ingest(self.receiver, ready, t1)
                for p, _, qd in ready:
                    window.queue_delays.append(qd)
                    window.delivered_bytes += p.size
            if self.events is not None:
                self.events.append((self._tick_count, ch.queue_bytes, ch.delivered_bytes - d0,
                                    ch.dropped_bytes - x0))
            self._tick_count += 1
        window.sent_packets = self.channel.sent_packets - sent0
        window.dropped_packets = self.channel.dropped_packets - dropped0
        window.frame_delays = list(self.receiver.completed_delays)
        window.played_frames = self.receiver.played_frames_in_interval
        fb = compute_feedback(window, sim.interval, self.feedback)
        self.feedback = fb

        sent_bytes = sum(f.size for f in frames)
        eff_fps = len(frames) / sim.interval
        rec = IntervalRecord(
            index=self.index, start=start, end=end, config=cfg, si=si, ti=ti,
            frames_sent=len(frames), frames_skipped=candidates - len(frames), keyframes=keyframes,
            sent_bytes=sent_bytes, bitrate_kbps=sent_bytes * 8.0 / 1000.0 / sim.interval,
            quality=self.model.quality(cfg.rate_factor, cfg.resolution, eff_fps, si, ti),
            spatial_quality=(self.model.spatial_quality(cfg.rate_factor, cfg.resolution, si)
                             if frames else 0.0),
            played=window.played_frames, playback_fps=fb.playback_fps,
            frame_delay=fb.frame_delay, rtt=fb.interval_rtt_mean, loss=fb.interval_loss_rate,
            delivered_bytes=window.delivered_bytes, received_kbps=fb.received_kbps,
            bandwidth_kbps=bw_sum / n_ticks, stale=fb.stale, feedback=fb, target_kbps=target_kbps,
        )
        self.history.append(rec)
        self.t = end
        self.index += 1
        return rec

    @property
    def frames_sent_total(self) -> int:
        return self.next_frame_id


def expected_frames(cfg: EncoderConfig, interval: float) -> int:
    return frame_count(cfg.frame_rate, interval)
