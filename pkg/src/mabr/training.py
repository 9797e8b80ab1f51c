"""Episode rollouts and the two-stage curriculum.

Stage one (foundation) trains each agent alone with vanilla PPO while the
other two encoding factors are pinned and their features masked.  Stage two
(team) starts from those actors and trains all three jointly with MAPPO: a
single critic on the global state supplies the baseline for every agent,
and all agents share the same reward.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .agents import (ACTIONS, AGENTS, CRITIC_STEP_DIM, K, N_ACTIONS, N_FEATURES, apply_action,
                     assemble_observation, build_global_state, feature_row, global_sequence,
                     mask_for_foundation, masked_inputs, steps_per_decision)
from .codec import EncoderConfig, RateQualityModel
from .config import Config
from .marl import (EntropySchedule, Trajectory, ValueNormalizer, gae, interval_reward,
                   normalize_advantages, ppo_loss, value_loss)
from .neuralnet import (Adam, NetworkSpec, PolicyParameters, clip_grads, forward, init,
                        save_checkpoint, sgd_step)
from .session import IntervalRecord, Session
from .traces import ContentTrace, NetworkTrace, mixed_content, split_traces, synthesize_dataset

FOUNDATION, TEAM = "foundation", "team"
_STAGE_CODE = {FOUNDATION: 1, TEAM: 2}
_AGENT_CODE = {"qua": 1, "res": 2, "fr": 3, "critic": 4}

LOG_FIELDS = ("epoch", "stage", "agent", "mean_reward", "validation_reward", "policy_loss",
              "value_loss", "entropy", "beta", "clip_fraction", "skipped")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EpisodeSpec:
    net: NetworkTrace
    content: ContentTrace
    start: float
    seconds: float
    seed: int


@dataclass
class Rollout:
    records: list
    rewards: np.ndarray
    trajectories: dict
    global_states: np.ndarray | None = None
    final_obs: dict = field(default_factory=dict)
    final_state: np.ndarray | None = None
    events: list | None = None

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean()) if self.rewards.size else 0.0


@dataclass
class Dataset:
    train: list
    test: list
    train_content: list
    test_content: list


def build_dataset(cfg: Config) -> Dataset:
    sim = cfg.sim
    traces = synthesize_dataset(sim.n_traces, sim.trace_seconds, sim.trace_seed, sim.granularity)
    split = split_traces([t.id for t in traces], sim.trace_seed)
    by_id = {t.id: t for t in traces}
    n = max(sim.content_pool, 1)
    return Dataset(
        train=[by_id[i] for i in split.train],
        test=[by_id[i] for i in split.test],
        train_content=[mixed_content(sim.trace_seconds, sim.content_seed + j) for j in range(n)],
        test_content=[mixed_content(sim.trace_seconds, sim.content_seed + 1000 + j) for j in range(n)],
    )


def sample_episode(rng: np.random.Generator, traces, contents, seconds: float,
                   interval: float = 0.1) -> EpisodeSpec:
    net = traces[int(rng.integers(len(traces)))]
    content = contents[int(rng.integers(len(contents)))]
    room = max(net.duration - seconds, 0.0)
    start = round(float(np.floor(rng.uniform(0, room) / interval)) * interval, 9) if room > 0 else 0.0
    return EpisodeSpec(net, content, start, seconds, int(rng.integers(2 ** 31)))


def held_out_episodes(ds: Dataset, n: int, seconds: float, seed: int = 12345) -> list[EpisodeSpec]:
    """Deterministic episodes over the test split, cycling traces then content."""
    out = []
    for i in range(n):
        net = ds.test[i % len(ds.test)]
        content = ds.test_content[(i // len(ds.test)) % len(ds.test_content)]
        out.append(EpisodeSpec(net, content, 0.0, min(seconds, net.duration), seed + i))
    return out


def actor_spec(cfg: Config, kind: str) -> NetworkSpec:
    p = cfg.ppo
    return NetworkSpec(N_FEATURES, N_ACTIONS[kind], "softmax", p.gru_units, p.fc1, p.fc2, K)


def critic_spec(cfg: Config, input_dim: int) -> NetworkSpec:
    p = cfg.ppo
    return NetworkSpec(input_dim, 1, "scalar", p.gru_units, p.fc1, p.fc2, K)


def foundation_initial(cfg: Config, kind: str) -> EncoderConfig:
    p, s = cfg.ppo, cfg.sim
    rf = s.initial_rf if kind == "qua" else p.pinned_rf
    res = s.initial_resolution if kind == "res" else p.pinned_resolution
    fps = s.initial_fps if kind == "fr" else p.pinned_fps
    return EncoderConfig(rf, res, fps)


def _choose(probs: np.ndarray, rng: np.random.Generator | None, greedy: bool) -> int:
    if greedy or rng is None:
        return int(np.argmax(probs))
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, rng.random() * c[-1], side="right"), probs.size - 1))


def run_policies(ep: EpisodeSpec, actors: dict, cfg: Config, initial: EncoderConfig, *,
                 masked: bool = False, greedy: bool = True, rng: np.random.Generator | None = None,
                 collect_global: bool = False, policy_override: dict | None = None,
                 model: RateQualityModel | None = None, record_events: bool = False) -> Rollout:
    """Drive one episode with the given actors; unlisted factors stay at ``initial``.

    ``policy_override`` maps an agent to a callable returning action
    probabilities, used for the uniform-random reference policy.
    """
    sim = cfg.sim
    model = model or RateQualityModel(cfg.codec)
    sess = Session(ep.net, ep.content, sim, model, seed=ep.seed, start=ep.start,
                   record_events=record_events)
    n = int(round(ep.seconds / sim.interval))
    rows = np.zeros((n, N_FEATURES))
    rewards = np.zeros(n)
    kinds = [k for k in AGENTS if k in actors or (policy_override and k in policy_override)]
    trajs = {k: Trajectory(k) for k in kinds}
    states = np.zeros((n, 3 * K * N_FEATURES + sum(N_ACTIONS.values()))) if collect_global else None
    cur = initial
    last = {"qua": ACTIONS["qua"].index(0), "res": ACTIONS["res"].index(cur.resolution),
            "fr": ACTIONS["fr"].index(cur.frame_rate)}

    def observe(kind, i):
        obs = assemble_observation(kind, rows[:i], timestamp=round(i * sim.interval, 9))
        return mask_for_foundation(kind, obs) if masked else obs

    def global_state(i):
        obs = [assemble_observation(k, rows[:i], timestamp=round(i * sim.interval, 9)) for k in AGENTS]
        return build_global_state(*obs, [last[k] for k in AGENTS]).vector

    records = []
    for i in range(n):
        if collect_global:
            states[i] = global_state(i)
        for kind in kinds:
            if i % steps_per_decision(kind):
                continue
            obs = observe(kind, i)
            if policy_override and kind in policy_override:
                probs = policy_override[kind](obs)
            else:
                probs, _ = forward(actors[kind], obs.values)
            a = _choose(probs, rng, greedy)
            cur = apply_action(kind, ACTIONS[kind][a], cur)
            last[kind] = a
            trajs[kind].add(obs.values, a, math.log(max(float(probs[a]), 1e-300)), i)
        rec = sess.step(cur)
        records.append(rec)
        rows[i] = feature_row(rec)
        rewards[i] = interval_reward(rec, cfg.reward)
    for kind, tr in trajs.items():
        span = steps_per_decision(kind)
        tr.rewards = [float(rewards[s:s + span].mean()) for s in tr.steps]
    final_obs = {k: observe(k, n).values for k in kinds}
    final_state = global_state(n) if collect_global else None
    return Rollout(records, rewards, trajs, states, final_obs, final_state, sess.events)


def uniform_policy(kind: str) -> Callable:
    p = np.full(N_ACTIONS[kind], 1.0 / N_ACTIONS[kind])
    return lambda obs: p


def _minibatches(rng: np.random.Generator, n: int, size: int):
    order = rng.permutation(n)
    for s in range(0, n, size):
        yield order[s:s + size]


def _update_actor(actor, opt, obs, actions, logp, adv, beta, cfg, rng):
    p = cfg.ppo
    stats = []
    for _ in range(p.epochs):
        for mb in _minibatches(rng, len(actions), p.minibatch):
            loss, grads, st = ppo_loss(actor, obs[mb], actions[mb], logp[mb], adv[mb], beta, p.clip)
            if not math.isfinite(loss):
                raise TrainingError("non-finite policy loss")
            grads, _ = clip_grads(grads, p.max_grad_norm)
            sgd_step(actor, grads, p.learning_rate, opt)
            stats.append(st)
    return stats


def _update_critic(critic, opt, inputs, targets, cfg, rng):
    p = cfg.ppo
    losses = []
    for _ in range(p.epochs):
        for mb in _minibatches(rng, len(targets), p.minibatch):
            loss, grads = value_loss(critic, inputs[mb], targets[mb], p.value_coef)
            if not math.isfinite(loss):
                raise TrainingError("non-finite value loss")
            grads, _ = clip_grads(grads, p.max_grad_norm)
            sgd_step(critic, grads, p.learning_rate, opt)
            losses.append(loss)
    return float(np.mean(losses)) if losses else 0.0


def _values(critic, vn: ValueNormalizer, inputs: np.ndarray) -> np.ndarray:
    if len(inputs) == 0:
        return np.zeros(0)
    v, _ = forward(critic, inputs)
    return vn.denormalize(np.atleast_1d(v))


def _seed(seed: int, stage: str, agent: str, *extra) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, _STAGE_CODE[stage], _AGENT_CODE[agent], *extra])


def _rng(seed, stage, agent, *extra) -> np.random.Generator:
    return np.random.default_rng(_seed(seed, stage, agent, *extra))


def _init_seed(seed, stage, agent) -> int:
    return int(_seed(seed, stage, agent).generate_state(1)[0])


def validation_episodes(ds: Dataset, cfg: Config, seed: int) -> list[EpisodeSpec]:
    rng = np.random.default_rng([seed, 99])
    return [sample_episode(rng, ds.train, ds.train_content, cfg.sim.train_episode_seconds)
            for _ in range(cfg.ppo.validation_episodes)]


def evaluate_policies(actors, cfg, episodes, initial_fn: Callable[[], EncoderConfig], masked=False,
                      policy_override=None, rng=None) -> list[float]:
    """Mean per-interval reward of each episode (greedy unless ``rng`` is given)."""
    return [run_policies(ep, actors, cfg, initial_fn(), masked=masked, greedy=rng is None, rng=rng,
                         policy_override=policy_override).mean_reward for ep in episodes]


class CSVLog:
    def __init__(self, path: Path | None):
        self.rows: list[dict] = []
        self.path = path
        if path is not None:
            with open(path, "w", newline="") as fh:
                csv.DictWriter(fh, LOG_FIELDS).writeheader()

    def write(self, **row) -> None:
        row = {k: row.get(k, "") for k in LOG_FIELDS}
        self.rows.append(row)
        if self.path is not None:
            with open(self.path, "a", newline="") as fh:
                csv.DictWriter(fh, LOG_FIELDS).writerow(
                    {k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _validate_now(it: int, iterations: int, every: int) -> bool:
    return it == iterations or (every > 0 and it % every == 0)


def _summarize(stats) -> dict:
    if not stats:
        return {"skipped": 0}
    return {"policy_loss": float(np.mean([s.policy_loss for s in stats])),
            "entropy": float(np.mean([s.entropy for s in stats])),
            "clip_fraction": float(np.mean([s.clip_fraction for s in stats])),
            "skipped": int(sum(s.skipped for s in stats))}


@dataclass
class FoundationResult:
    actor: PolicyParameters
    critic: PolicyParameters
    validation: list


def train_foundation(kind: str, ds: Dataset, cfg: Config, seed: int, log: CSVLog | None = None,
                     iterations: int | None = None) -> FoundationResult:
    """Single-agent PPO with the other two factors pinned and masked."""
    p = cfg.ppo
    if iterations is None:
        iterations = p.res_foundation_iterations if kind == "res" else p.foundation_iterations
    frozen = masked_inputs(kind)
    zero = p.zero_masked_inputs
    actor = init(actor_spec(cfg, kind), _init_seed(seed, FOUNDATION, kind),
                 FOUNDATION).with_frozen(frozen, zero)
    critic = init(critic_spec(cfg, N_FEATURES), _init_seed(seed, FOUNDATION, "critic"),
                  FOUNDATION).with_frozen(frozen, zero)
    a_opt, c_opt = Adam(), Adam()
    vn = ValueNormalizer()
    sched = EntropySchedule.from_config(p)
    target_steps = p.res_rollout_length if kind == "res" else p.rollout_length
    val_eps = validation_episodes(ds, cfg, seed)
    initial = lambda: foundation_initial(cfg, kind)
    best_score = float(np.mean(evaluate_policies({kind: actor}, cfg, val_eps, initial, masked=True)))
    best_actor, best_critic = actor.copy(), critic.copy()
    history = [best_score]
    log = log or CSVLog(None)
    log.write(epoch=0, stage=FOUNDATION, agent=kind, validation_reward=best_score, beta=sched.beta)
    for it in range(1, iterations + 1):
        rng = _rng(seed, FOUNDATION, kind, it)
        obs, acts, logp, adv, rets, ep_rewards = [], [], [], [], [], []
        n = 0
        while n < target_steps:
            ep = sample_episode(rng, ds.train, ds.train_content, cfg.sim.train_episode_seconds)
            ro = run_policies(ep, {kind: actor}, cfg, initial(), masked=True, greedy=False, rng=rng)
            tr = ro.trajectories[kind]
            o = np.stack(tr.obs)
            v = _values(critic, vn, np.concatenate([o, ro.final_obs[kind][None]]))
            a_, r_ = gae(tr.rewards, v, np.zeros(len(tr)), p.gamma, p.gae_lambda)
            obs.append(o)
            acts.append(np.asarray(tr.actions))
            logp.append(np.asarray(tr.logp))
            adv.append(a_)
            rets.append(r_)
            ep_rewards.append(ro.mean_reward)
            n += len(tr)
        obs, acts, logp = np.concatenate(obs), np.concatenate(acts), np.concatenate(logp)
        adv, rets = normalize_advantages(np.concatenate(adv)), np.concatenate(rets)
        vn.update(rets)
        stats = _update_actor(actor, a_opt, obs, acts, logp, adv, sched.beta, cfg, rng)
        vloss = _update_critic(critic, c_opt, obs, vn.normalize(rets), cfg, rng)
        mean_r = float(np.mean(ep_rewards))
        sched.update(mean_r)
        score = ""
        if _validate_now(it, iterations, p.validation_every):
            score = float(np.mean(evaluate_policies({kind: actor}, cfg, val_eps, initial, masked=True)))
            history.append(score)
            if score > best_score:
                best_score, best_actor, best_critic = score, actor.copy(), critic.copy()
        log.write(epoch=it, stage=FOUNDATION, agent=kind, mean_reward=mean_r, validation_reward=score,
                  value_loss=vloss, beta=sched.beta, **_summarize(stats))
    return FoundationResult(best_actor, best_critic, history)


def team_initial(cfg: Config, pinned_fps: int | None = None) -> EncoderConfig:
    s = cfg.sim
    return EncoderConfig(s.initial_rf, s.initial_resolution,
                         s.initial_fps if pinned_fps is None else pinned_fps)


@dataclass
class TeamResult:
    actors: dict
    critic: PolicyParameters
    validation: list
    best_epoch: int


def train_team(stage1: dict, ds: Dataset, cfg: Config, seed: int, log: CSVLog | None = None,
               iterations: int | None = None) -> TeamResult:
    """MAPPO from the stage-one actors with a shared critic on the global state.

    Epoch 0 is the stage-one actors run jointly; the returned actors are
    whichever epoch scored best on the validation episodes.
    """
    p = cfg.ppo
    iterations = p.team_iterations if iterations is None else iterations
    missing = [k for k in AGENTS if k not in stage1]
    if missing:
        raise TrainingError(f"missing stage-one actors: {', '.join(missing)}")
    actors = {}
    for k in AGENTS:
        if stage1[k].spec != actor_spec(cfg, k):
            raise TrainingError(f"stage-one {k} actor layout does not match the configured network")
        a = stage1[k].with_frozen(())
        a.stage = TEAM
        actors[k] = a
    critic = init(critic_spec(cfg, CRITIC_STEP_DIM), _init_seed(seed, TEAM, "critic"), TEAM)
    opts = {k: Adam() for k in AGENTS}
    c_opt = Adam()
    vn = ValueNormalizer()
    scheds = {k: EntropySchedule.from_config(p) for k in AGENTS}
    val_eps = validation_episodes(ds, cfg, seed)
    initial = lambda: team_initial(cfg)
    best_score = float(np.mean(evaluate_policies(actors, cfg, val_eps, initial)))
    best = ({k: a.copy() for k, a in actors.items()}, critic.copy(), 0)
    history = [best_score]
    log = log or CSVLog(None)
    for k in AGENTS:
        log.write(epoch=0, stage=TEAM, agent=k, validation_reward=best_score, beta=scheds[k].beta)
    for it in range(1, iterations + 1):
        rng = _rng(seed, TEAM, "critic", it)
        batch = {k: ([], [], [], []) for k in AGENTS}
        c_in, c_ret, ep_rewards = [], [], []
        n = 0
        while n < p.rollout_length:
            ep = sample_episode(rng, ds.train, ds.train_content, cfg.sim.train_episode_seconds)
            ro = run_policies(ep, actors, cfg, initial(), greedy=False, rng=rng, collect_global=True)
            seq = global_sequence(np.concatenate([ro.global_states, ro.final_state[None]]))
            v = _values(critic, vn, seq)
            a_, r_ = gae(ro.rewards, v, np.zeros(ro.rewards.size), p.gamma, p.gae_lambda)
            for k in AGENTS:
                tr = ro.trajectories[k]
                steps = np.asarray(tr.steps)
                o, ac, lp, ad = batch[k]
                o.append(np.stack(tr.obs))
                ac.append(np.asarray(tr.actions))
                lp.append(np.asarray(tr.logp))
                ad.append(a_[steps])
            c_in.append(seq[:-1])
            c_ret.append(r_)
            ep_rewards.append(ro.mean_reward)
            n += ro.rewards.size
        c_in, c_ret = np.concatenate(c_in), np.concatenate(c_ret)
        vn.update(c_ret)
        vloss = _update_critic(critic, c_opt, c_in, vn.normalize(c_ret), cfg, rng)
        mean_r = float(np.mean(ep_rewards))
        summaries = {}
        for k in AGENTS:
            stats = []
            if it > p.critic_warmup:
                o, ac, lp, ad = (np.concatenate(x) for x in batch[k])
                stats = _update_actor(actors[k], opts[k], o, ac, lp, normalize_advantages(ad),
                                      scheds[k].beta, cfg, rng)
            scheds[k].update(mean_r)
            summaries[k] = _summarize(stats)
        score = ""
        if _validate_now(it, iterations, p.validation_every):
            score = float(np.mean(evaluate_policies(actors, cfg, val_eps, initial)))
            history.append(score)
            if score > best_score:
                best_score = score
                best = ({k: a.copy() for k, a in actors.items()}, critic.copy(), it)
        for k in AGENTS:
            log.write(epoch=it, stage=TEAM, agent=k, mean_reward=mean_r, validation_reward=score,
                      value_loss=vloss, beta=scheds[k].beta, **summaries[k])
    return TeamResult(best[0], best[1], history, best[2])


@dataclass
class CurriculumResult:
    stage1: dict
    stage1_critics: dict
    team: TeamResult
    log: CSVLog


def train_curriculum(cfg: Config, seed: int, out_dir: Path | None = None,
                     ds: Dataset | None = None, stages: tuple = (FOUNDATION, TEAM),
                     agents: tuple = AGENTS, progress: Callable[[str], None] | None = None):
    """Run the requested stages and write checkpoints and the CSV log to ``out_dir``."""
    ds = ds or build_dataset(cfg)
    out = Path(out_dir) if out_dir is not None else None
    log = CSVLog(out / "training_log.csv" if out else None)
    say = progress or (lambda msg: None)
    stage1, critics = {}, {}
    if FOUNDATION in stages:
        for k in agents:
            say(f"foundation {k}")
            res = train_foundation(k, ds, cfg, seed, log)
            stage1[k], critics[k] = res.actor, res.critic
            if out:
                save_checkpoint(out / f"foundation_{k}.ckpt", {"actor": res.actor, "critic": res.critic},
                                {"stage": FOUNDATION, "agent": k, "seed": seed})
    team = None
    if TEAM in stages:
        say("team")
        team = train_team(stage1, ds, cfg, seed, log)
        if out:
            nets = {k: a for k, a in team.actors.items()}
            nets["critic"] = team.critic
            save_checkpoint(out / "team.ckpt", nets,
                            {"stage": TEAM, "seed": seed, "best_epoch": team.best_epoch})
    return CurriculumResult(stage1, critics, team, log)
