"""Write a synthetic three-region dataset and forecast it end to end.

    python3 scripts/synthetic_demo.py --out-dir demo_out
"""

import argparse
import csv
import time
from pathlib import Path

from growthcast.config import EngineConfig
from growthcast.ingest import population_csv, series_to_long_csv
from growthcast.pipeline import load_inputs, run_forecast
from growthcast.synthetic import desk_regions


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="demo_out")
    ap.add_argument("--days", type=int, default=120)
    ap.add_argument("--samples", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    regions = desk_regions(args.days, args.seed)
    (out / "data.csv").write_text(series_to_long_csv(regions))
    (out / "population.csv").write_text(population_csv(regions))

    # round-trip through the CSV reader, as the CLI would
    series = load_inputs(out / "data.csv", out / "population.csv")
    t0 = time.perf_counter()
    results = run_forecast(series, EngineConfig(samples=args.samples), out / "forecast")
    print(f"forecast {len(results)} regions in {time.perf_counter() - t0:.2f} s -> {out / 'forecast'}")

    with open(out / "forecast" / "quantiles.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["quantile"] in ("0.1", "0.5", "0.9")]
    for r in results:
        last = r.observed.daily_cases[-7:].mean()
        print(f"{r.region_id:>8}: status={'ok' if r.ok else r.error} regime={r.cases.ensemble.regime if r.ok else '-'} "
              f"last-week mean cases={last:.1f}")
        for kind in ("cases", "deaths"):
            sel = [x for x in rows if x["region"] == r.region_id and x["kind"] == kind]
            if not sel:
                continue
            day28 = {x["quantile"]: float(x["value"]) for x in sel[-3:]}
            print(f"          {kind:>6} day 28: q10={day28['0.1']:.0f} median={day28['0.5']:.0f} q90={day28['0.9']:.0f}")


if __name__ == "__main__":
    main()
