"""Network bandwidth and content-complexity traces.

Bandwidth traces are zero-order-hold step functions in kbps; content traces
carry per-sample spatial/temporal information (SI/TI).  Both are immutable
once built, so a single instance can back many simulator runs.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_BASE_RTT_MS = 40.0
DEFAULT_LOSS = 0.0
TRAIN_FRACTION = 0.8

NETWORK_FAMILIES = ("stable", "moderate", "volatile")
CONTENT_PROFILES = ("low_motion", "conferencing", "gaming", "sports")

# (si_lo, si_hi, ti_lo, ti_hi); the disjoint TI bands keep the gaming and
# sports means strictly above conferencing for every seed.
PROFILE_RANGES = {
    "low_motion": (20.0, 45.0, 2.0, 10.0),
    "conferencing": (30.0, 60.0, 5.0, 18.0),
    "gaming": (60.0, 120.0, 25.0, 60.0),
    "sports": (50.0, 110.0, 40.0, 90.0),
}
SI_MAX = max(r[1] for r in PROFILE_RANGES.values())
TI_MAX = max(r[3] for r in PROFILE_RANGES.values())

# mean kbps, log-volatility, dips per second
FAMILY_PARAMS = {
    "stable": (7000.0, 0.15, 0.01),
    "moderate": (5500.0, 0.30, 0.03),
    "volatile": (4500.0, 0.50, 0.06),
}


class TraceError(ValueError):
    pass


class TraceParseError(TraceError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


class EmptyTraceError(TraceError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _duration(times: np.ndarray) -> float:
    """End of the last hold; the final sample lasts one sampling step."""
    if len(times) == 1:
        return float(times[0]) + 1.0
    return float(times[-1] + (times[-1] - times[-2]))


@dataclass(frozen=True)
class NetworkTrace:
    id: str
    times: np.ndarray
    bandwidth: np.ndarray
    base_rtt_ms: float = DEFAULT_BASE_RTT_MS
    loss_rate: float = DEFAULT_LOSS
    family: str = ""

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "bandwidth", _frozen(self.bandwidth))
        if len(self.times) == 0:
            raise EmptyTraceError(f"trace {self.id!r} has no samples")
        if len(self.times) != len(self.bandwidth):
            raise TraceError("times and bandwidth lengths differ")
        if np.any(np.diff(self.times) <= 0):
            raise TraceError(f"trace {self.id!r}: timestamps must strictly increase")
        if np.any(self.bandwidth < 0):
            raise TraceError(f"trace {self.id!r}: negative bandwidth")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise TraceError(f"trace {self.id!r}: loss_rate outside [0, 1]")

    @property
    def duration(self) -> float:
        return _duration(self.times) - float(self.times[0])

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.bandwidth.tolist()))

    def bandwidth_at(self, t: float) -> float:
        """Zero-order hold lookup; time wraps around past the trace end."""
        t0 = float(self.times[0])
        t = t0 + (t - t0) % self.duration
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.bandwidth[max(i, 0)])

    def integral(self, a: float, b: float) -> float:
        """Kilobits carried over [a, b] within the first period."""
        knots, cum = _cumulative(self.times, self.bandwidth)
        return float(np.interp(b, knots, cum) - np.interp(a, knots, cum))


@dataclass(frozen=True)
class ContentTrace:
    id: str
    times: np.ndarray
    si: np.ndarray
    ti: np.ndarray
    profile: str = ""

    def __post_init__(self):
        for name in ("times", "si", "ti"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if len(self.times) == 0:
            raise EmptyTraceError(f"content trace {self.id!r} has no samples")
        if not len(self.times) == len(self.si) == len(self.ti):
            raise TraceError("content column lengths differ")
        if np.any(np.diff(self.times) <= 0):
            raise TraceError(f"content trace {self.id!r}: timestamps must strictly increase")
        if np.any(self.si < 0) or np.any(self.ti < 0):
            raise TraceError(f"content trace {self.id!r}: negative SI/TI")

    @property
    def duration(self) -> float:
        return _duration(self.times) - float(self.times[0])

    def window_mean(self, start: float, end: float) -> tuple[float, float]:
        """Mean (SI, TI) of samples falling in [start, end), wrapping in time.

        Falls back to the sample held at ``start`` when the window contains
        no sample.
        """
        t0, dur = float(self.times[0]), self.duration
        a = t0 + (start - t0) % dur
        b = a + (end - start)
        lo = int(np.searchsorted(self.times, a - 1e-9))
        hi = int(np.searchsorted(self.times, b - 1e-9))
        if hi > lo and b <= t0 + dur:
            return float(self.si[lo:hi].mean()), float(self.ti[lo:hi].mean())
        i = max(int(np.searchsorted(self.times, a + 1e-9)) - 1, 0)
        return float(self.si[i]), float(self.ti[i])


@dataclass(frozen=True)
class TraceSplit:
    train: list[str]
    test: list[str]
    seed: int


@dataclass
class ManifestEntry:
    path: Path
    base_rtt_ms: float = DEFAULT_BASE_RTT_MS
    loss_rate: float = DEFAULT_LOSS
    family: str = ""
    content: Path | None = None
    extra: dict = field(default_factory=dict)


def _cumulative(times: np.ndarray, bw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    knots = np.append(times, _duration(times))
    cum = np.concatenate([[0.0], np.cumsum(bw * np.diff(knots))])
    return knots, cum


def _read_rows(path: Path, ncols: int):
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != ncols:
            raise TraceParseError(path, lineno, f"expected {ncols} columns, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise TraceParseError(path, lineno, f"non-numeric value in {line!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise TraceParseError(path, lineno, "non-finite value")
        if rows and vals[0] <= rows[-1][1][0]:
            raise TraceParseError(path, lineno, "timestamps must strictly increase")
        rows.append((lineno, vals))
    if not rows:
        raise EmptyTraceError(f"{path}: no samples")
    return rows


def load_network_trace(path, format: str = "csv", trace_id: str | None = None,
                       base_rtt_ms: float = DEFAULT_BASE_RTT_MS,
                       loss_rate: float = DEFAULT_LOSS, family: str = "") -> NetworkTrace:
    if format != "csv":
        raise TraceError(f"unsupported trace format {format!r}")
    path = Path(path)
    rows = _read_rows(path, 2)
    for lineno, (_, bw) in rows:
        if bw < 0:
            raise TraceParseError(path, lineno, "negative bandwidth")
    arr = np.array([v for _, v in rows])
    return NetworkTrace(trace_id or path.stem, arr[:, 0], arr[:, 1],
                        base_rtt_ms=base_rtt_ms, loss_rate=loss_rate, family=family)


def load_content_trace(path, trace_id: str | None = None, profile: str = "") -> ContentTrace:
    path = Path(path)
    rows = _read_rows(path, 3)
    for lineno, (_, si, ti) in rows:
        if si < 0 or ti < 0:
            raise TraceParseError(path, lineno, "negative SI/TI")
    arr = np.array([v for _, v in rows])
    return ContentTrace(trace_id or path.stem, arr[:, 0], arr[:, 1], arr[:, 2], profile=profile)


def save_network_trace(trace: NetworkTrace, path) -> None:
    lines = [f"{t:.6g},{b:.6g}" for t, b in zip(trace.times, trace.bandwidth)]
    Path(path).write_text("\n".join(lines) + "\n")


def save_content_trace(trace: ContentTrace, path) -> None:
    lines = [f"{t:.6g},{s:.6g},{v:.6g}" for t, s, v in zip(trace.times, trace.si, trace.ti)]
    Path(path).write_text("\n".join(lines) + "\n")


def resample(trace: NetworkTrace, granularity: float) -> NetworkTrace:
    """Bin the hold signal into ``granularity``-wide time-weighted means.

    A trailing partial bin is averaged over the part the trace covers.
    """
    if granularity <= 0:
        raise TraceError("granularity must be positive")
    times = trace.times - trace.times[0]
    knots, cum = _cumulative(times, trace.bandwidth)
    end = knots[-1]
    n = max(1, math.ceil(end / granularity - 1e-9))
    edges = np.minimum(np.arange(n + 1) * granularity, end)
    values = np.diff(np.interp(edges, knots, cum)) / np.diff(edges)
    return NetworkTrace(trace.id, np.arange(n) * granularity, values,
                        base_rtt_ms=trace.base_rtt_ms, loss_rate=trace.loss_rate,
                        family=trace.family)


def split_traces(ids: Sequence[str], seed: int) -> TraceSplit:
    ids = list(ids)
    if len(ids) < 2:
        raise TraceError("need at least two traces to split")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(math.floor(TRAIN_FRACTION * len(ids) + 0.5))
    n_train = min(max(n_train, 1), len(ids) - 1)
    shuffled = [ids[i] for i in order]
    return TraceSplit(train=shuffled[:n_train], test=shuffled[n_train:], seed=seed)


def _stable_seed(*parts) -> list[int]:
    return [zlib.crc32(str(p).encode()) for p in parts]


def _ou_path(rng: np.random.Generator, n: int, dt: float, theta: float, sigma: float,
             x0: float = 0.0) -> np.ndarray:
    x = np.empty(n)
    x[0] = x0
    a = math.exp(-theta * dt)
    s = sigma * math.sqrt((1 - a * a) / (2 * theta))
    z = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = a * x[i - 1] + s * z[i]
    return x


def synthesize_content_trace(profile: str, duration: float, seed: int,
                             sampling: float = 0.1) -> ContentTrace:
    """Scene-structured SI/TI series confined to the profile's bands."""
    if profile not in PROFILE_RANGES:
        raise TraceError(f"unknown content profile {profile!r}")
    if duration <= 0:
        raise TraceError("duration must be positive")
    si_lo, si_hi, ti_lo, ti_hi = PROFILE_RANGES[profile]
    rng = np.random.default_rng(_stable_seed("content", profile, seed))
    n = int(round(duration / sampling))
    levels = np.empty((n, 2))
    level = rng.uniform(0.2, 0.8, size=2)
    for i in range(n):
        # scene cut on average every 8 s
        if rng.random() < sampling / 8.0:
            level = rng.uniform(0.1, 0.9, size=2)
        levels[i] = level
    jitter = np.stack([_ou_path(rng, n, sampling, 1.0, 0.15) for _ in range(2)], axis=1)
    x = np.clip(levels + jitter, 0.0, 1.0)
    si = si_lo + (si_hi - si_lo) * x[:, 0]
    ti = ti_lo + (ti_hi - ti_lo) * x[:, 1]
    return ContentTrace(f"{profile}-{seed}", np.arange(n) * sampling, si, ti, profile=profile)


def concat_content(traces: Sequence[ContentTrace], trace_id: str = "mixed") -> ContentTrace:
    """Play the given traces back to back on one timeline."""
    times, si, ti = [], [], []
    offset = 0.0
    for tr in traces:
        times.append(tr.times - tr.times[0] + offset)
        si.append(tr.si)
        ti.append(tr.ti)
        offset += tr.duration
    return ContentTrace(trace_id, np.concatenate(times), np.concatenate(si),
                        np.concatenate(ti), profile="mixed")


def mixed_content(duration: float, seed: int) -> ContentTrace:
    """Equal-length segments of every profile, like a concatenated test clip."""
    seg = duration / len(CONTENT_PROFILES)
    parts = [synthesize_content_trace(p, seg, seed) for p in CONTENT_PROFILES]
    return concat_content(parts, trace_id=f"mixed-{seed}")


def synthesize_network_trace(family: str, duration: float, seed: int,
                             granularity: float = 0.5) -> NetworkTrace:
    """Log-OU bandwidth with multiplicative dips, sampled at ``granularity``."""
    if family not in FAMILY_PARAMS:
        raise TraceError(f"unknown network family {family!r}")
    mean, vol, dip_rate = FAMILY_PARAMS[family]
    rng = np.random.default_rng(_stable_seed("net", family, seed))
    n = int(round(duration / granularity))
    base = mean * rng.uniform(0.6, 1.4)
    logb = _ou_path(rng, n, granularity, 0.2, vol)
    bw = base * np.exp(logb)
    i = 0
    while i < n:
        if rng.random() < dip_rate * granularity:
            length = int(rng.uniform(1.0, 4.0) / granularity)
            bw[i:i + length] *= rng.uniform(0.1, 0.4)
            i += length
        i += 1
    bw = np.clip(bw, 200.0, 30000.0)
    return NetworkTrace(f"{family}-{seed:03d}", np.arange(n) * granularity, np.round(bw, 1),
                        family=family)


def synthesize_dataset(n_traces: int, duration: float, seed: int,
                       granularity: float = 0.5) -> list[NetworkTrace]:
    """``n_traces`` network traces cycling through the volatility families."""
    out = []
    for i in range(n_traces):
        family = NETWORK_FAMILIES[i % len(NETWORK_FAMILIES)]
        out.append(synthesize_network_trace(family, duration, seed * 100003 + i, granularity))
    return out


def step_down_trace(high: float = 8000.0, low: float = 2000.0, t_drop: float = 7.0,
                    duration: float = 20.0, granularity: float = 0.5) -> NetworkTrace:
    n = int(round(duration / granularity))
    t = np.arange(n) * granularity
    return NetworkTrace("step-down", t, np.where(t < t_drop, high, low), family="step")


def parse_manifest(path) -> list[ManifestEntry]:
    """One trace per line: ``path [base_rtt=ms] [loss=frac] [family=x] [content=path]``."""
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        first, *rest = line.split()
        entry = ManifestEntry(path=(path.parent / first))
        for token in rest:
            key, sep, value = token.partition("=")
            if not sep:
                raise TraceParseError(path, lineno, f"expected key=value, got {token!r}")
            try:
                if key == "base_rtt":
                    entry.base_rtt_ms = float(value)
                elif key == "loss":
                    entry.loss_rate = float(value)
                elif key == "family":
                    entry.family = value
                elif key == "content":
                    entry.content = path.parent / value
                else:
                    entry.extra[key] = value
            except ValueError:
                raise TraceParseError(path, lineno, f"bad value in {token!r}") from None
        entries.append(entry)
    return entries


def load_manifest(path) -> list[NetworkTrace]:
    return [
        load_network_trace(e.path, base_rtt_ms=e.base_rtt_ms, loss_rate=e.loss_rate,
                           family=e.family)
        for e in parse_manifest(path)
    ]


def write_manifest(path, traces: Sequence[NetworkTrace], filenames: Sequence[str]) -> None:
    lines = []
    for tr, name in zip(traces, filenames):
        tokens = [name, f"base_rtt={tr.base_rtt_ms:g}", f"loss={tr.loss_rate:g}"]
        if tr.family:
            tokens.append(f"family={tr.family}")
        lines.append(" ".join(tokens))
    Path(path).write_text("\n".join(lines) + "\n")
