"""GCC on the 8 -> 2 Mbps step-down trace: target vs actual bitrate and RTT.

    python3 scripts/incoordination.py --seed 0 --csv stepdown.csv
"""

import argparse

import numpy as np

from mabr.config import Config
from mabr.evaluation import run_episode
from mabr.traces import step_down_trace, synthesize_content_trace
from mabr.training import EpisodeSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--controller", default="gcc_on", choices=("gcc_on", "gcc_off"))
    ap.add_argument("--csv", help="write the per-interval series here")
    args = ap.parse_args()

    cfg = Config()
    net = step_down_trace()
    content = synthesize_content_trace("conferencing", net.duration, 0)
    rep, recs, _ = run_episode(args.controller, EpisodeSpec(net, content, 0.0, net.duration, args.seed), cfg)
    gap = np.mean([abs(r.bitrate_kbps - r.target_kbps) / r.target_kbps for r in recs])
    base = net.base_rtt_ms / 1000.0
    high = sum(r.end - r.start for r in recs if r.start >= 7.0 and r.rtt > 2 * base)
    print(f"mean |actual - target| / target: {100 * gap:.1f}%")
    print(f"post-drop time with RTT > {2e3 * base:.0f} ms: {high:.1f} s")
    print(f"counters: {rep.counters}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("t,bandwidth_kbps,target_kbps,bitrate_kbps,rtt_ms,resolution,rate_factor\n")
            for r in recs:
                fh.write(f"{r.start:.1f},{r.bandwidth_kbps:.1f},{r.target_kbps:.1f},{r.bitrate_kbps:.1f},"
                         f"{1e3 * r.rtt:.1f},{r.config.resolution},{r.config.rate_factor}\n")


if __name__ == "__main__":
    main()
