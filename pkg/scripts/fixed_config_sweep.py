"""Reward and QoE of fixed (rf, resolution) settings at 60 fps on held-out traces.

Used to place the rate factor pinned during the foundation course near the
best fixed setting.

    python3 scripts/fixed_config_sweep.py --episodes 12 --seconds 60
"""

import argparse

import numpy as np

from mabr.codec import EncoderConfig
from mabr.config import Config
from mabr.marl import interval_reward
from mabr.session import Session
from mabr.training import build_dataset, held_out_episodes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=12)
    ap.add_argument("--seconds", type=float, default=60.0)
    ap.add_argument("--resolutions", default="720p,1080p,1440p")
    ap.add_argument("--rfs", default="20,24,28,32,36,40,44")
    args = ap.parse_args()
    cfg = Config()
    eps = held_out_episodes(build_dataset(cfg), args.episodes, args.seconds)
    n = int(round(args.seconds / cfg.sim.interval))
    print("res    rf  reward  quality  rtt_ms    fps     kbps")
    for res in args.resolutions.split(","):
        for rf in map(int, args.rfs.split(",")):
            rows = []
            for ep in eps:
                s = Session(ep.net, ep.content, cfg.sim, seed=ep.seed)
                rs = [s.step(EncoderConfig(rf, res, cfg.sim.capture_fps)) for _ in range(n)]
                rows.append([np.mean([interval_reward(r, cfg.reward) for r in rs]),
                             np.mean([r.quality for r in rs]), 1e3 * np.mean([r.rtt for r in rs]),
                             np.mean([r.playback_fps for r in rs]), np.mean([r.bitrate_kbps for r in rs])])
            m = np.mean(rows, axis=0)
            print(f"{res:<6} {rf:>3} {m[0]:7.3f} {m[1]:8.2f} {m[2]:7.1f} {m[3]:6.2f} {m[4]:8.0f}")


if __name__ == "__main__":
    main()
