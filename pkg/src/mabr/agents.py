"""Observations, action spaces, and action application for the qua/res/fr agents.

Every agent sees the same eight features over its last K=6 decision
intervals: SI, TI, rate factor, resolution, encoding fps, playback fps, RTT,
and loss.  qua and fr decide every 0.1 s; res decides every 1 s and sees
1-s means of the underlying 0.1-s records.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import FRAME_RATES, MAX_FPS, PIXEL_FRACTION, RESOLUTIONS, RF_MAX, RF_MIN, EncoderConfig
from .traces import SI_MAX, TI_MAX

K = 6
FEATURES = ("u", "v", "c", "y", "f", "h", "d", "p")
N_FEATURES = len(FEATURES)
AGENTS = ("qua", "res", "fr")
BASE_INTERVAL = 0.1
AGENT_INTERVAL = {"qua": 0.1, "res": 1.0, "fr": 0.1}
RTT_SCALE = 1.0  # seconds

ACTIONS = {
    "qua": (8, 4, 2, 0, -1, -2, -4),
    "res": RESOLUTIONS,
    "fr": FRAME_RATES,
}
N_ACTIONS = {k: len(v) for k, v in ACTIONS.items()}

FOUNDATION_MASK = {
    "qua": ("y", "f"),
    "fr": ("y", "c"),
    "res": ("f", "c"),
}

GLOBAL_STATE_LEN = len(AGENTS) * K * N_FEATURES + sum(N_ACTIONS.values())
CRITIC_STEP_DIM = len(AGENTS) * N_FEATURES + sum(N_ACTIONS.values())


class ActionError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


def steps_per_decision(kind: str) -> int:
    return int(round(AGENT_INTERVAL[kind] / BASE_INTERVAL))


@dataclass(frozen=True)
class AgentObservation:
    kind: str
    values: np.ndarray            # (K, N_FEATURES), oldest interval first
    mask: tuple = (False,) * N_FEATURES
    timestamp: float = 0.0

    def feature(self, name: str) -> np.ndarray:
        return self.values[:, FEATURES.index(name)]


def feature_row(rec) -> np.ndarray:
    """Normalised features of one 0.1-s interval record."""
    cfg = rec.config
    return np.array([
        min(rec.si / SI_MAX, 1.0),
        min(rec.ti / TI_MAX, 1.0),
        cfg.rate_factor / RF_MAX,
        PIXEL_FRACTION[cfg.resolution],
        cfg.frame_rate / MAX_FPS,
        min(rec.playback_fps / MAX_FPS, 1.0),
        min(rec.rtt / RTT_SCALE, 1.0),
        rec.loss,
    ])


def _as_rows(history) -> np.ndarray:
    if isinstance(history, np.ndarray):
        return history.reshape(-1, N_FEATURES)
    if len(history) == 0:
        return np.zeros((0, N_FEATURES))
    return np.stack([feature_row(r) for r in history])


def assemble_observation(kind: str, history, timestamp: float | None = None) -> AgentObservation:
    """Window of the last K decision intervals of ``kind``, zero-padded at start.

    ``history`` is a sequence of interval records (or their feature rows),
    oldest first, ending at the decision time.  For res each entry of the
    window is the mean of one 1-s block of ten records.
    """
    if kind not in AGENT_INTERVAL:
        raise ActionError(f"unknown agent {kind!r}")
    rows = _as_rows(history)
    span = steps_per_decision(kind)
    n = len(rows)
    need = K * span
    tail = rows[max(n - need, 0):]
    if span == 1:
        out = np.zeros((K, N_FEATURES))
        if len(tail):
            out[K - len(tail):] = tail
    else:
        padded = np.zeros((need, N_FEATURES))
        if len(tail):
            padded[need - len(tail):] = tail
        # a partly filled oldest block averages only the records it has
        counts = np.clip(np.arange(1, K + 1) * span - (need - len(tail)), 0, span)
        out = padded.reshape(K, span, N_FEATURES).sum(axis=1) / np.maximum(counts, 1)[:, None]
    if timestamp is None:
        timestamp = round(n * BASE_INTERVAL, 9)
    return AgentObservation(kind, out, (False,) * N_FEATURES, timestamp)


def apply_action(kind: str, action, current: EncoderConfig) -> EncoderConfig:
    if action not in ACTIONS.get(kind, ()):
        raise ActionError(f"{action!r} is not a {kind} action")
    if kind == "qua":
        rf = min(max(current.rate_factor + action, RF_MIN), RF_MAX)
        return EncoderConfig(rf, current.resolution, current.frame_rate)
    if kind == "fr":
        return EncoderConfig(current.rate_factor, current.resolution, action)
    return EncoderConfig(current.rate_factor, action, current.frame_rate)


def needs_restart(old: EncoderConfig, new: EncoderConfig) -> bool:
    return old.resolution != new.resolution


def mask_for_foundation(kind: str, obs: AgentObservation) -> AgentObservation:
    """Zero the features owned by the two pinned agents and flag them."""
    idx = [FEATURES.index(name) for name in FOUNDATION_MASK[kind]]
    values = obs.values.copy()
    values[:, idx] = 0.0
    mask = list(obs.mask)
    for i in idx:
        mask[i] = True
    return AgentObservation(obs.kind, values, tuple(mask), obs.timestamp)


def masked_inputs(kind: str) -> frozenset:
    return frozenset(FEATURES.index(name) for name in FOUNDATION_MASK[kind])


@dataclass(frozen=True)
class GlobalState:
    vector: np.ndarray
    timestamp: float

    def as_sequence(self) -> np.ndarray:
        return global_sequence(self.vector)


def one_hot(index: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[index] = 1.0
    return v


def build_global_state(obs_qua: AgentObservation, obs_res: AgentObservation,
                       obs_fr: AgentObservation, last_actions: Sequence[int]) -> GlobalState:
    """Concatenate [qua | res | fr] observations and one-hot last actions.

    ``last_actions`` holds action indices in agent order (qua, res, fr).
    """
    got = (obs_qua.kind, obs_res.kind, obs_fr.kind)
    if got != AGENTS:
        raise AlignmentError(f"observations must be ordered {AGENTS}, got {got}")
    ts = obs_qua.timestamp
    if abs(obs_res.timestamp - ts) > 1e-9 or abs(obs_fr.timestamp - ts) > 1e-9:
        raise AlignmentError("observation timestamps are not aligned")
    parts = [o.values.ravel() for o in (obs_qua, obs_res, obs_fr)]
    parts += [one_hot(a, N_ACTIONS[k]) for k, a in zip(AGENTS, last_actions)]
    return GlobalState(np.concatenate(parts), ts)


def global_sequence(vector: np.ndarray) -> np.ndarray:
    """Reshape GlobalState vectors (..., 162) into critic sequences (..., K, 42).

    Step t carries each agent's step-t features followed by the action
    one-hots, repeated at every step.
    """
    vector = np.asarray(vector)
    lead = vector.shape[:-1]
    obs_len = len(AGENTS) * K * N_FEATURES
    obs = vector[..., :obs_len].reshape(*lead, len(AGENTS), K, N_FEATURES)
    obs = np.moveaxis(obs, -3, -2).reshape(*lead, K, len(AGENTS) * N_FEATURES)
    acts = np.broadcast_to(vector[..., None, obs_len:], (*lead, K, vector.shape[-1] - obs_len))
    return np.concatenate([obs, acts], axis=-1)
