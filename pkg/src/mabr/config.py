"""Flat ``key=value`` run configuration.

Every knob lives in one of five namespaces (``sim.``, ``codec.``, ``gcc.``,
``ppo.``, ``reward.``).  A config file is plain text::

    # comment
    sim.episode_seconds = 60
    ppo.learning_rate = 3e-4

Unknown keys are rejected together so a typo never silently falls back to
a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping


class ConfigError(ValueError):
    """Raised for unknown keys or values that do not parse."""


@dataclass
class SimConfig:
    tick: float = 0.01
    interval: float = 0.1
    mtu: int = 1200
    queue_ms: float = 500.0
    base_rtt_ms: float = 40.0
    random_loss: float = 0.0
    granularity: float = 0.5
    capture_fps: int = 60
    episode_seconds: float = 120.0
    train_episode_seconds: float = 30.0
    initial_rf: int = 30
    initial_resolution: str = "1080p"
    initial_fps: int = 30
    keyframe_on_loss: bool = True
    n_traces: int = 60
    trace_seconds: float = 120.0
    content_seed: int = 0
    trace_seed: int = 0
    content_pool: int = 4


@dataclass
class CodecConfig:
    b_s: float = 0.75
    b_t: float = 0.6
    rf_ref: int = 23
    halving: float = 6.0
    cq_min: float = 0.4
    cq_max: float = 0.9
    ds_min: float = 0.3
    ds_max: float = 0.8
    k_t: float = 3.0
    rref_min: float = 2000.0
    rref_max: float = 12000.0
    noise_sigma: float = 0.15
    keyframe_factor: float = 4.0


@dataclass
class GCCConfig:
    rate_min: float = 300.0
    rate_max: float = 10000.0
    initial_rate: float = 1500.0
    loss_high: float = 0.10
    loss_low: float = 0.02
    increase: float = 1.05
    overuse_factor: float = 0.85
    slope_smoothing: float = 0.5
    threshold_init_ms: float = 5.0
    threshold_min_ms: float = 1.0
    threshold_max_ms: float = 60.0
    k_up: float = 0.01
    k_down: float = 0.00018
    overuse_intervals: int = 2
    feedback_interval: float = 0.5
    thresholds: str = "0:540p,1500:720p,3500:1080p,6500:1440p"
    resolution_adaptation: bool = True
    fixed_resolution: str = "1080p"


@dataclass
class PPOConfig:
    clip: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_beta: float = 0.01
    beta_min: float = 1e-4
    beta_decay: float = 0.5
    stagnation_window: int = 100
    epochs: int = 4
    learning_rate: float = 3e-4
    rollout_length: int = 2048
    res_rollout_length: int = 256
    minibatch: int = 256
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    foundation_iterations: int = 60
    res_foundation_iterations: int = 40
    team_iterations: int = 160
    validation_episodes: int = 6
    critic_warmup: int = 2
    validation_every: int = 5
    zero_masked_inputs: bool = True
    pinned_rf: int = 36
    pinned_resolution: str = "1080p"
    pinned_fps: int = 30
    gru_units: int = 64
    fc1: int = 64
    fc2: int = 32


@dataclass
class RewardConfig:
    quality_weight: float = 1.0
    framerate_weight: float = 8.0
    delay_weight: float = 6.0
    # "rate_factor": q = (51 - rf) / 51; "proxy": spatial quality proxy / 100
    quality_term: str = "proxy"


NAMESPACES = {
    "sim": SimConfig,
    "codec": CodecConfig,
    "gcc": GCCConfig,
    "ppo": PPOConfig,
    "reward": RewardConfig,
}


@dataclass
class Config:
    sim: SimConfig = field(default_factory=SimConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    gcc: GCCConfig = field(default_factory=GCCConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)

    def to_flat(self) -> dict[str, Any]:
        flat = {}
        for ns in NAMESPACES:
            for k, v in dataclasses.asdict(getattr(self, ns)).items():
                flat[f"{ns}.{k}"] = v
        return flat

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_flat().items())

    def with_overrides(self, overrides: Mapping[str, str]) -> "Config":
        cfg = dataclasses.replace(
            self, **{ns: dataclasses.replace(getattr(self, ns)) for ns in NAMESPACES}
        )
        _apply(cfg, overrides.items(), source="override")
        return cfg


def _format(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(raw: str, typ: Any, key: str) -> Any:
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ}") from exc
    return raw


def _apply(cfg: Config, items: Iterable[tuple[str, str]], source: str) -> None:
    unknown = []
    for key, raw in items:
        ns, _, name = key.partition(".")
        section = getattr(cfg, ns, None) if ns in NAMESPACES else None
        fields = {f.name: f.type for f in dataclasses.fields(section)} if section else {}
        if name not in fields:
            unknown.append(key)
            continue
        setattr(section, name, _coerce(str(raw), fields[name], key))
    if unknown:
        raise ConfigError(f"unknown {source} keys: {', '.join(sorted(unknown))}")


def parse_config(text: str) -> Config:
    items = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, value = line.partition("=")
        items.append((key.strip(), value.strip()))
    cfg = Config()
    _apply(cfg, items, source="config")
    return cfg


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text())
