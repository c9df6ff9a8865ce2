"""Rolling-origin backtest on synthetic regions, against observed or self-generated truth.

    python3 scripts/calibration_backtest.py --truth self --samples 500
"""

import argparse
import time
from pathlib import Path

import numpy as np

from growthcast.backtest import REPORT_HEADER, backtest
from growthcast.config import EngineConfig
from growthcast.pipeline import write_csv
from growthcast.synthetic import synthetic_region

REGIONS = [
    ("rising", 400, 2_000_000),
    ("falling", 900, 5_000_000),
    ("flat", 300, 2_000_000),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--truth", choices=("observed", "self"), default="self")
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--horizon", type=int, default=28)
    ap.add_argument("--days", type=int, default=160)
    ap.add_argument("--origin-step", type=int, default=3)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--report", default=None, help="optional CSV path for the per-day rows")
    args = ap.parse_args()

    regions = [
        synthetic_region(name, name, args.days, population=pop, level=level, seed=args.seed + i)
        for i, (name, level, pop) in enumerate(REGIONS)
    ]
    last = args.days - 1 - (args.horizon if args.truth == "observed" else 0)
    origins = [regions[0].dates[i] for i in range(60, last + 1, args.origin_step)]
    cfg = EngineConfig(samples=args.samples, horizon=args.horizon, seed=args.seed)
    t0 = time.perf_counter()
    rep = backtest(regions, origins, cfg, truth=args.truth)
    print(f"{len(origins)} origins x {len(regions)} regions in {time.perf_counter() - t0:.1f} s")
    for kind in ("cases", "deaths"):
        print(f"{kind:>6}: pairs={rep.n_pairs(kind)} cov50={rep.coverage(50, kind):.3f} "
              f"cov80={rep.coverage(80, kind):.3f} mae={rep.mae(kind):.1f}")
    rows = [r for r in rep.rows if r[2] == "cases"]
    by_h = {}
    for r in rows:
        by_h.setdefault(r[3], []).append(r[11])
    print("case 50% coverage by horizon week:",
          " ".join(f"w{w + 1}={np.mean(sum((by_h[h] for h in range(7 * w + 1, 7 * w + 8) if h in by_h), [])):.2f}"
                   for w in range(args.horizon // 7)))
    if args.report:
        write_csv(Path(args.report), REPORT_HEADER, rep.rows)


if __name__ == "__main__":
    main()
