"""Episode runner, QoE aggregation, CDFs, and the comparison table."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .codec import MAX_FPS, RateQualityModel
from .config import Config, ConfigError
from .gcc import BaselineController
from .neuralnet import load_checkpoint
from .session import Session
from .training import EpisodeSpec, run_policies, team_initial

CONTROLLERS = ("gcc_on", "gcc_off", "mamba", "mamba_beta")
METRICS = ("bitrate_kbps", "quality", "rtt", "playback_fps")
# column header, record attribute, display scale
TABLE_COLUMNS = (
    ("video rate (kbps)", "bitrate_kbps", 1.0),
    ("quality (proxy)", "quality", 1.0),
    ("delay (mean RTT, ms)", "rtt", 1000.0),
    ("frame rate (fps)", "playback_fps", 1.0),
)


@dataclass(frozen=True)
class QoERecord:
    index: int
    bitrate_kbps: float
    quality: float
    playback_fps: float
    frame_delay: float
    rtt: float
    loss: float

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"QoE field {k} is not finite")
        if self.playback_fps > MAX_FPS + 1e-9:
            raise ValueError("playback frame rate above the capture maximum")


@dataclass
class EpisodeReport:
    trace_id: str
    controller: str
    seed: int
    records: list
    means: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.means:
            self.means = episode_means(self.records)

    def to_json(self) -> str:
        return json.dumps({
            "trace_id": self.trace_id, "controller": self.controller, "seed": self.seed,
            "means": self.means, "counters": self.counters,
            "records": [asdict(r) for r in self.records],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EpisodeReport":
        d = json.loads(text)
        return cls(d["trace_id"], d["controller"], d["seed"],
                   [QoERecord(**r) for r in d["records"]], d["means"], d["counters"])


def episode_means(records) -> dict:
    fields = ("bitrate_kbps", "quality", "playback_fps", "frame_delay", "rtt", "loss")
    if not records:
        return {f: 0.0 for f in fields}
    return {f: float(np.mean([getattr(r, f) for r in records])) for f in fields}


def _qoe(rec) -> QoERecord:
    # playback over one 0.1-s window can burst above 60; the metric is capped
    return QoERecord(rec.index, rec.bitrate_kbps, rec.quality, min(rec.playback_fps, MAX_FPS),
                     rec.frame_delay, rec.rtt, rec.loss)


def _run_gcc(ep: EpisodeSpec, cfg: Config, resolution_adaptation: bool, record_events: bool):
    model = RateQualityModel(cfg.codec)
    sess = Session(ep.net, ep.content, cfg.sim, model, seed=ep.seed, start=ep.start,
                   record_events=record_events)
    ctl = BaselineController(cfg.gcc, model, cfg.sim.interval, cfg.sim.capture_fps,
                             resolution_adaptation)
    si, ti = sess.content_at(0.0, cfg.sim.interval)
    n = int(round(ep.seconds / cfg.sim.interval))
    for _ in range(n):
        enc, target = ctl.step(sess.feedback, si, ti)
        rec = sess.step(enc, frame_filter=ctl.frame_filter, target_kbps=target)
        si, ti = rec.si, rec.ti
    counters = {"frames_skipped": ctl.skipped, "resolution_changes": ctl.resolution_changes,
                "gcc_updates": ctl.updates}
    return sess.history, counters, sess.events


def run_episode(controller: str, ep: EpisodeSpec, cfg: Config | None = None,
                actors: dict | None = None, record_events: bool = False):
    """Run one controller over one episode; returns ``(report, session records, events)``."""
    cfg = cfg or Config()
    if controller not in CONTROLLERS:
        raise ConfigError(f"unknown controller {controller!r}; choose from {', '.join(CONTROLLERS)}")
    if controller in ("gcc_on", "gcc_off"):
        records, counters, events = _run_gcc(ep, cfg, controller == "gcc_on", record_events)
    else:
        needed = ("qua", "res", "fr") if controller == "mamba" else ("qua", "res")
        missing = [k for k in needed if not actors or k not in actors]
        if missing:
            raise ConfigError(f"{controller} needs trained actors for {', '.join(missing)}")
        use = {k: actors[k] for k in needed}
        pinned = None if controller == "mamba" else cfg.sim.capture_fps
        ro = run_policies(ep, use, cfg, team_initial(cfg, pinned), record_events=record_events)
        records, events = ro.records, ro.events
        changes = sum(a.config.resolution != b.config.resolution for a, b in zip(records, records[1:]))
        counters = {"frames_skipped": 0, "resolution_changes": int(changes),
                    "frame_rate_changes": int(sum(a.config.frame_rate != b.config.frame_rate
                                                  for a, b in zip(records, records[1:])))}
    report = EpisodeReport(ep.net.id, controller, ep.seed, [_qoe(r) for r in records], counters=counters)
    return report, records, events


def load_actors(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    nets, _ = load_checkpoint(path)
    return {k: v for k, v in nets.items() if k in ("qua", "res", "fr")}


def empirical_cdf(values) -> tuple[np.ndarray, np.ndarray]:
    x = np.sort(np.asarray(values, dtype=float))
    return x, np.arange(1, x.size + 1) / max(x.size, 1)


@dataclass
class Summary:
    means: dict          # controller -> metric -> mean over episodes
    cdfs: dict           # controller -> metric -> (values, fractions)
    deltas: dict         # (controller, reference) -> metric -> mean paired difference
    episodes: dict       # controller -> count


def aggregate(reports, reference: str | None = None) -> Summary:
    if not reports:
        raise ValueError("aggregate needs at least one report")
    by_ctl: dict[str, list] = {}
    for r in reports:
        by_ctl.setdefault(r.controller, []).append(r)
    means, cdfs = {}, {}
    metrics = ("bitrate_kbps", "quality", "rtt", "playback_fps", "frame_delay", "loss")
    for ctl, reps in by_ctl.items():
        means[ctl] = {m: float(np.mean([r.means[m] for r in reps])) for m in metrics}
        cdfs[ctl] = {m: empirical_cdf([getattr(q, m) for r in reps for q in r.records]) for m in METRICS}
    deltas = {}
    ref = reference if reference in by_ctl else None
    if ref is not None:
        ref_by_key = {(r.trace_id, r.seed): r for r in by_ctl[ref]}
        for ctl, reps in by_ctl.items():
            if ctl == ref:
                continue
            pairs = [(r, ref_by_key[(r.trace_id, r.seed)]) for r in reps if (r.trace_id, r.seed) in ref_by_key]
            if pairs:
                deltas[(ctl, ref)] = {m: float(np.mean([a.means[m] - b.means[m] for a, b in pairs]))
                                      for m in metrics}
    return Summary(means, cdfs, deltas, {c: len(v) for c, v in by_ctl.items()})


def render_table(summary: Summary) -> str:
    """Aligned text table: one row per controller, columns as in the QoE report."""
    headers = ["controller"] + [h for h, _, _ in TABLE_COLUMNS]
    rows = [[ctl] + [f"{summary.means[ctl][attr] * scale:.2f}" for _, attr, scale in TABLE_COLUMNS]
            for ctl in summary.means]
    for (ctl, ref), d in summary.deltas.items():
        cells = []
        for _, attr, scale in TABLE_COLUMNS:
            base = summary.means[ref][attr]
            pct = 100.0 * d[attr] / base if base else 0.0
            cells.append(f"{pct:+.1f}%")
        rows.append([f"{ctl} vs {ref}"] + cells)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    line = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                   for i, (c, w) in enumerate(zip(cells, widths)))
    return "\n".join([line(headers), line(["-" * w for w in widths])] + [line(r) for r in rows]) + "\n"


def write_cdfs(summary: Summary, directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for ctl, per_metric in summary.cdfs.items():
        for metric, (x, f) in per_metric.items():
            p = directory / f"cdf_{ctl}_{metric}.csv"
            with open(p, "w") as fh:
                fh.write("value,fraction\n")
                for a, b in zip(x, f):
                    fh.write(f"{a!r},{b!r}\n")
            paths.append(p)
    return paths
