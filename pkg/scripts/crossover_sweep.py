"""Quality-vs-bitrate crossover points of adjacent resolutions per content profile.

    python3 scripts/crossover_sweep.py
"""

import argparse

from mabr.codec import RESOLUTIONS, RateQualityModel, crossover_bitrate
from mabr.traces import PROFILE_RANGES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--fps", type=int, default=30)
    args = ap.parse_args()
    model = RateQualityModel()
    pairs = list(zip(RESOLUTIONS[:-1], RESOLUTIONS[1:]))
    print("profile".ljust(14) + "".join(f"{hi}/{lo}".rjust(14) for hi, lo in pairs))
    for name, (lo_si, hi_si, lo_ti, hi_ti) in PROFILE_RANGES.items():
        si, ti = (lo_si + hi_si) / 2, (lo_ti + hi_ti) / 2
        cells = []
        for hi, lo in pairs:
            x = crossover_bitrate(model, si, ti, hi, lo, args.fps)
            cells.append("none" if x is None else f"{x:.0f} kbps")
        print(name.ljust(14) + "".join(c.rjust(14) for c in cells))


if __name__ == "__main__":
    main()
