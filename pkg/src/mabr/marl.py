"""Reward, advantage estimation, and the PPO / MAPPO losses.

The curriculum orchestration that drives these lives in :mod:`mabr.training`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codec import RF_MAX
from .config import PPOConfig, RewardConfig
from .neuralnet import PolicyParameters, backward, forward, log_softmax, softmax


@dataclass(frozen=True)
class RewardWeights:
    quality: float = 1.0
    framerate: float = 8.0
    delay: float = 6.0

    def __post_init__(self):
        if min(self.quality, self.framerate, self.delay) < 0:
            raise ValueError("reward weights must be non-negative")

    @classmethod
    def from_config(cls, cfg: RewardConfig) -> "RewardWeights":
        return cls(cfg.quality_weight, cfg.framerate_weight, cfg.delay_weight)


def rf_quality(rf: float) -> float:
    return (RF_MAX - rf) / RF_MAX


def compute_reward(q_norm: float, h: float, d: float, w: RewardWeights = RewardWeights()) -> float:
    """``q`` in [0, 1], playback fps ``h`` (scaled by 60), delay ``d`` in seconds."""
    return w.quality * q_norm + w.framerate * (h / 60.0) - w.delay * d


def quality_term(rec, cfg: RewardConfig) -> float:
    if cfg.quality_term == "rate_factor":
        return rf_quality(rec.config.rate_factor)
    if cfg.quality_term == "proxy":
        return rec.spatial_quality / 100.0
    raise ValueError(f"unknown reward quality term {cfg.quality_term!r}")


def interval_reward(rec, cfg: RewardConfig) -> float:
    return compute_reward(quality_term(rec, cfg), rec.playback_fps, rec.frame_delay,
                          RewardWeights.from_config(cfg))


def gae(rewards, values, dones, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns; ``values`` carries one bootstrap entry at the end."""
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=float)
    if v.shape != (r.size + 1,) or d.shape != r.shape:
        raise ValueError(f"gae needs len(values) = len(rewards) + 1 = {r.size + 1} and matching dones")
    adv = np.zeros_like(r)
    last = 0.0
    for t in reversed(range(r.size)):
        keep = 1.0 - d[t]
        delta = r[t] + gamma * v[t + 1] * keep - v[t]
        last = delta + gamma * lam * keep * last
        adv[t] = last
    return adv, adv + v[:-1]


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    adv = np.asarray(adv, dtype=float)
    if adv.size < 2:
        return adv - adv.mean() if adv.size else adv
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def entropy(probs: np.ndarray) -> np.ndarray:
    p = np.clip(probs, 1e-300, None)
    return -(probs * np.log(p)).sum(axis=-1)


@dataclass
class LossStats:
    loss: float
    policy_loss: float
    entropy: float
    clip_fraction: float
    skipped: int


def ppo_loss(params: PolicyParameters, obs, actions, old_logp, advantages,
             beta: float, clip: float) -> tuple[float, dict, LossStats]:
    """Clipped surrogate minus ``beta`` times the mean entropy, with its gradient.

    Samples whose probability ratio is not finite are dropped and counted.
    """
    _, tr = forward(params, obs)
    logits = tr.out
    logp_all = log_softmax(logits)
    probs = softmax(logits)
    actions = np.asarray(actions, dtype=int)
    idx = np.arange(actions.size)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(logp_all[idx, actions] - np.asarray(old_logp, dtype=float))
    adv = np.asarray(advantages, dtype=float)
    ok = np.isfinite(ratio) & np.isfinite(adv)
    n = int(ok.sum())
    skipped = actions.size - n
    dlogits = np.zeros_like(logits)
    if n == 0:
        return 0.0, backward(params, tr, dlogits), LossStats(0.0, 0.0, 0.0, 0.0, skipped)
    r, a, p, lp = ratio[ok], adv[ok], probs[ok], logp_all[ok]
    clipped = np.clip(r, 1.0 - clip, 1.0 + clip)
    s1, s2 = r * a, clipped * a
    obj = np.minimum(s1, s2)
    ent = -(p * lp).sum(axis=-1)
    policy_loss = -obj.mean()
    loss = policy_loss - beta * ent.mean()

    # d obj / d logp_a = A * r while the unclipped branch is active
    live = (s1 <= s2).astype(float)
    g_obj = -(a * r * live) / n
    onehot = np.zeros_like(p)
    onehot[np.arange(n), actions[ok]] = 1.0
    g = g_obj[:, None] * (onehot - p)
    g += (beta / n) * p * (lp + ent[:, None])
    dlogits[ok] = g
    grads = backward(params, tr, dlogits)
    stats = LossStats(float(loss), float(policy_loss), float(ent.mean()),
                      float(np.mean(np.abs(r - 1.0) > clip)), skipped)
    return float(loss), grads, stats


def value_loss(params: PolicyParameters, obs, targets, coef: float = 0.5) -> tuple[float, dict]:
    v, tr = forward(params, obs)
    v = np.atleast_1d(v)
    t = np.asarray(targets, dtype=float)
    err = v - t
    loss = coef * float(np.mean(err * err))
    return loss, backward(params, tr, (2.0 * coef / err.size) * err)


@dataclass
class EntropySchedule:
    beta: float = 0.01
    beta_min: float = 1e-4
    factor: float = 0.5
    window: int = 100
    best: float = -math.inf
    stagnant: int = 0

    @classmethod
    def from_config(cls, cfg: PPOConfig) -> "EntropySchedule":
        return cls(cfg.entropy_beta, cfg.beta_min, cfg.beta_decay, cfg.stagnation_window)

    def update(self, mean_reward: float) -> float:
        if mean_reward > self.best:
            self.best = mean_reward
            self.stagnant = 0
        else:
            self.stagnant += 1
            if self.stagnant >= self.window:
                self.beta = max(self.beta * self.factor, self.beta_min)
                self.stagnant = 0
        return self.beta


def decay_entropy(beta: float, reward_history, window: int = 100, factor: float = 0.5,
                  beta_min: float = 1e-4) -> float:
    """Replay a per-epoch reward history through the stagnation rule."""
    sched = EntropySchedule(beta, beta_min, factor, window)
    for r in reward_history:
        sched.update(float(r))
    return sched.beta


@dataclass
class ValueNormalizer:
    """Running mean/variance of return targets; the critic regresses in
    normalized units."""
    mean: float = 0.0
    var: float = 1.0
    count: float = 0.0

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return
        bm, bv, bn = float(x.mean()), float(x.var()), float(x.size)
        if self.count == 0:
            self.mean, self.var, self.count = bm, max(bv, 1e-6), bn
            return
        total = self.count + bn
        delta = bm - self.mean
        self.mean += delta * bn / total
        self.var = (self.var * self.count + bv * bn + delta * delta * self.count * bn / total) / total
        self.var = max(self.var, 1e-6)
        self.count = total

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def denormalize(self, x):
        return np.asarray(x, dtype=float) * self.std + self.mean


@dataclass
class Trajectory:
    """Decisions of one agent: observations, actions, log-probs, rewards, critic inputs."""
    kind: str
    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    critic_inputs: list = field(default_factory=list)
    steps: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    def add(self, obs, action: int, logp: float, step: int, critic_input=None) -> None:
        if not math.isfinite(logp):
            raise FloatingPointError(f"{self.kind}: non-finite log-prob at step {step}")
        self.obs.append(obs)
        self.actions.append(action)
        self.logp.append(logp)
        self.steps.append(step)
        self.critic_inputs.append(obs if critic_input is None else critic_input)
