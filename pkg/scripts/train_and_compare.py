"""Train the full curriculum for one seed and compare it with the baselines.

    python3 scripts/train_and_compare.py --seed 1 --out runs/seed1

Writes the checkpoints, training log, per-controller CDFs and the
comparison table under ``--out``.  Stage-1 policies run jointly as an
extra row, the ablation the team course is measured against.
"""

import argparse
import time
from pathlib import Path

import numpy as np

from mabr.config import load_config
from mabr.evaluation import EpisodeReport, _qoe, aggregate, render_table, run_episode, write_cdfs
from mabr.training import (build_dataset, evaluate_policies, held_out_episodes, run_policies,
                           team_initial, train_curriculum)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="runs/curriculum")
    ap.add_argument("--config")
    ap.add_argument("--episodes", type=int, default=24)
    args = ap.parse_args()

    cfg = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    result = train_curriculum(cfg, args.seed, out,
                              progress=lambda m: print(f"[{time.time() - t0:6.0f}s] {m}", flush=True))
    print(f"trained in {time.time() - t0:.0f}s, team best epoch {result.team.best_epoch}")

    ds = build_dataset(cfg)
    eps = held_out_episodes(ds, args.episodes, cfg.sim.episode_seconds)
    reports = []
    for ctl in ("gcc_on", "gcc_off", "mamba", "mamba_beta"):
        reports += [run_episode(ctl, ep, cfg, result.team.actors)[0] for ep in eps]
    for ep in eps:
        ro = run_policies(ep, result.stage1, cfg, team_initial(cfg))
        reports.append(EpisodeReport(ep.net.id, "stage1_joint", ep.seed, [_qoe(r) for r in ro.records]))
    summary = aggregate(reports, reference="gcc_on")
    write_cdfs(summary, out / "cdf")
    table = render_table(summary)
    (out / "table.txt").write_text(table)
    print(table, end="")

    start = lambda: team_initial(cfg)
    team = np.mean(evaluate_policies(result.team.actors, cfg, eps, start))
    joint = np.mean(evaluate_policies(result.stage1, cfg, eps, start))
    print(f"mean reward: team {team:.4f}, stage-1 joint {joint:.4f}")


if __name__ == "__main__":
    main()
