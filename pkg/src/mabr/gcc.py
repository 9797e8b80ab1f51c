"""WebRTC-style baseline: GCC target bitrate plus heuristic resolution/frame control.

The loss-based and delay-based controllers each propose a sending rate and
the smaller one wins.  The resulting target drives a VBR-emulating encoder
(rf picked by inverting the rate model) and either a fixed resolution table
or a leaky-bucket frame skipper, never both at once.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .codec import PIXELS, EncodedFrame, EncoderConfig, RateQualityModel
from .config import GCCConfig
from .netsim import LinkFeedback

OVERUSE, UNDERUSE, NORMAL = "overuse", "underuse", "normal"


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


@dataclass(frozen=True)
class LossController:
    rate: float
    rate_min: float = 300.0
    rate_max: float = 10000.0


def loss_update(ctl: LossController, loss_rate: float, cfg: GCCConfig | None = None) -> LossController:
    cfg = cfg or GCCConfig()
    if not 0.0 <= loss_rate <= 1.0:
        raise ValueError("loss rate outside [0, 1]")
    rate = ctl.rate
    if loss_rate > cfg.loss_high:
        rate *= 1.0 - 0.5 * loss_rate
    elif loss_rate < cfg.loss_low:
        rate *= cfg.increase
    return dataclasses.replace(ctl, rate=_clamp(rate, ctl.rate_min, ctl.rate_max))


@dataclass(frozen=True)
class DelayController:
    rate: float
    rate_min: float = 300.0
    rate_max: float = 10000.0
    trend: float = 0.0                   # smoothed RTT slope, seconds per interval
    threshold: float = 0.005             # seconds
    state: str = NORMAL
    over_count: int = 0
    last_rtt: float | None = None

    def __post_init__(self):
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")


def delay_update(ctl: DelayController, rtt_samples, received_rate: float,
                 cfg: GCCConfig | None = None) -> DelayController:
    """One feedback interval of the RTT-trend overuse detector and rate update."""
    cfg = cfg or GCCConfig()
    samples = np.asarray(rtt_samples, dtype=float)
    if samples.size == 0:
        raise ValueError("need at least one RTT sample")
    rtt = float(samples.mean())
    slope = 0.0 if ctl.last_rtt is None else rtt - ctl.last_rtt
    a = cfg.slope_smoothing
    m = a * ctl.trend + (1.0 - a) * slope
    gamma = ctl.threshold
    over = ctl.over_count
    if m > gamma:
        over += 1
        state = OVERUSE if over >= cfg.overuse_intervals else NORMAL
    elif m < -gamma:
        over, state = 0, UNDERUSE
    else:
        over, state = 0, NORMAL

    k = cfg.k_up if abs(m) > gamma else cfg.k_down
    gamma = _clamp(gamma + k * (abs(m) - gamma), cfg.threshold_min_ms / 1000.0,
                   cfg.threshold_max_ms / 1000.0)

    rate = ctl.rate
    if state == OVERUSE:
        rate = cfg.overuse_factor * received_rate
    elif state == NORMAL:
        rate *= cfg.increase
    return dataclasses.replace(ctl, rate=_clamp(rate, ctl.rate_min, ctl.rate_max), trend=m,
                               threshold=gamma, state=state, over_count=over, last_rtt=rtt)


def combine(loss_rate_out: float, delay_rate_out: float) -> float:
    if loss_rate_out <= 0 or delay_rate_out <= 0:
        raise ValueError("controller outputs must be positive")
    return min(loss_rate_out, delay_rate_out)


@dataclass(frozen=True)
class ResolutionTable:
    entries: tuple

    def __post_init__(self):
        if not self.entries:
            raise ValueError("resolution table is empty")
        th = [t for t, _ in self.entries]
        px = [PIXELS[r] for _, r in self.entries]
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must strictly increase")
        if any(b < a for a, b in zip(px, px[1:])):
            raise ValueError("resolutions must not decrease with threshold")

    @classmethod
    def parse(cls, text: str) -> "ResolutionTable":
        entries = []
        for item in text.split(","):
            th, _, res = item.partition(":")
            entries.append((float(th), res.strip()))
        return cls(tuple(entries))


DEFAULT_TABLE = ResolutionTable.parse(GCCConfig().thresholds)


def map_resolution(table: ResolutionTable, target: float) -> str:
    chosen = table.entries[0][1]
    for threshold, res in table.entries:
        if threshold <= target:
            chosen = res
    return chosen


@dataclass(frozen=True)
class LeakyBucket:
    level: float = 0.0
    threshold: float = 0.0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("bucket level must be non-negative")


def bucket_step(b: LeakyBucket, frame_bytes: float, tick: float, target: float) -> tuple[LeakyBucket, bool]:
    if target <= 0:
        raise ValueError("target must be positive")
    level = max(0.0, b.level + frame_bytes - target * 125.0 * tick)
    return dataclasses.replace(b, level=level), level > b.threshold


@dataclass
class BaselineController:
    """Stateful GCC pipeline driven once per feedback interval."""
    cfg: GCCConfig = field(default_factory=GCCConfig)
    model: RateQualityModel = field(default_factory=RateQualityModel)
    interval: float = 0.1
    capture_fps: int = 60
    resolution_adaptation: bool | None = None

    def __post_init__(self):
        c = self.cfg
        if self.resolution_adaptation is None:
            self.resolution_adaptation = c.resolution_adaptation
        self.table = ResolutionTable.parse(c.thresholds)
        self.loss = LossController(c.initial_rate, c.rate_min, c.rate_max)
        self.delay = DelayController(c.initial_rate, c.rate_min, c.rate_max,
                                     threshold=c.threshold_init_ms / 1000.0)
        self.target = c.initial_rate
        self.bucket = LeakyBucket()
        self._skip_next = False
        self.skipped = 0
        self.resolution = c.fixed_resolution
        self.resolution_changes = 0
        self.updates = 0
        self._pending: list[LinkFeedback] = []

    def update(self, feedback: LinkFeedback | None) -> float:
        """Accumulate per-interval feedback; run the controllers once per
        ``gcc.feedback_interval`` worth of reports."""
        if feedback is not None:
            self._pending.append(feedback)
        per_report = max(1, int(round(self.cfg.feedback_interval / self.interval)))
        if len(self._pending) >= per_report:
            fb = merge_feedback(self._pending, self.interval)
            self._pending = []
            self.loss = loss_update(self.loss, fb.interval_loss_rate, self.cfg)
            # a window without deliveries carries no new RTT information
            if not fb.stale:
                self.delay = delay_update(self.delay, fb.rtt_samples, fb.received_kbps, self.cfg)
            self.updates += 1
        self.target = combine(self.loss.rate, self.delay.rate)
        return self.target

    def step(self, feedback: LinkFeedback | None, si: float, ti: float) -> tuple[EncoderConfig, float]:
        """Return the next interval's encoder settings and the target bitrate.

        ``si``/``ti`` are the encoder's latest content statistics (the
        previous interval), so rate control lags content changes.
        """
        target = self.update(feedback)
        if self.resolution_adaptation:
            res = map_resolution(self.table, target)
            if res != self.resolution:
                self.resolution_changes += 1
            self.resolution = res
        rf = self.model.rate_factor_for(target, self.resolution, self.capture_fps, si, ti)
        return EncoderConfig(rf, self.resolution, self.capture_fps), target

    def frame_filter(self, frames: list[EncodedFrame]) -> list[EncodedFrame]:
        """Leaky-bucket skipping; a no-op while resolution adaptation is on."""
        if self.resolution_adaptation or not frames:
            return frames
        tick = self.interval / len(frames)
        self.bucket = dataclasses.replace(self.bucket, threshold=self.target * 125.0 * self.interval)
        kept = []
        for f in frames:
            if self._skip_next and not f.keyframe:
                self.skipped += 1
                self.bucket, self._skip_next = bucket_step(self.bucket, 0, tick, self.target)
                continue
            kept.append(f)
            self.bucket, self._skip_next = bucket_step(self.bucket, f.size, tick, self.target)
        return kept


def merge_feedback(reports: list[LinkFeedback], interval: float) -> LinkFeedback:
    """Fold consecutive per-interval reports into one report."""
    samples = tuple(x for r in reports for x in r.rtt_samples)
    sent = sum(r.sent_packets for r in reports)
    dropped = sum(r.dropped_packets for r in reports)
    delivered = sum(r.delivered_bytes for r in reports)
    span = interval * len(reports)
    last = reports[-1]
    return LinkFeedback(
        interval_rtt_mean=float(np.mean(samples)) if samples else last.interval_rtt_mean,
        interval_loss_rate=dropped / sent if sent else 0.0,
        delivered_bytes=delivered,
        frame_delay=last.frame_delay,
        playback_fps=sum(r.playback_fps for r in reports) / len(reports),
        received_kbps=delivered * 8.0 / 1000.0 / span,
        rtt_samples=samples,
        stale=not samples,
        sent_packets=sent,
        dropped_packets=dropped,
    )


def baseline_controller_step(ctl: BaselineController, feedback: LinkFeedback | None,
                             si: float, ti: float) -> tuple[EncoderConfig, float]:
    return ctl.step(feedback, si, ti)
