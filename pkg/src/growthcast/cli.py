"""Command-line entry point: forecast, backtest, inspect-outliers, dump-posterior.

Every config key can also be set through ``GROWTHCAST_<KEY>`` environment
variables (``GROWTHCAST_OUTLIERS__HAMPEL_WINDOW`` for nested keys). Flags
override the environment, which overrides the config file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .backtest import OBSERVED, REPORT_HEADER, SELF, backtest
from .cases import fit_case_model
from .config import ENV_PREFIX, dump_config, load_config
from .growth import SparseRegime
from .ingest import IngestError, LONG, WIDE

FLAG_KEYS = {"seed": "seed", "horizon": "horizon", "samples": "samples", "workers": "workers"}


def _env(name, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", default=_env("data"), help="cases/deaths CSV (long layout) or wide cumulative cases")
    common.add_argument("--deaths-data", default=_env("deaths_data"), help="wide cumulative deaths CSV")
    common.add_argument("--layout", choices=(LONG, WIDE), default=_env("layout", LONG))
    common.add_argument("--population", default=_env("population"), help="CSV with columns region,population")
    common.add_argument("--config", default=_env("config"), help="flat 'key = value' config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--samples", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--regions", default=_env("regions"), help="comma-separated region ids")
    common.add_argument("--out-dir", default=_env("out_dir", "out"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="growthcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    fc = sub.add_parser("forecast", parents=[common], help="run the forecast pipeline")
    fc.add_argument("--write-samples", action="store_true", help="also write samples.csv")

    bt = sub.add_parser("backtest", parents=[common], help="rolling-origin backtest")
    bt.add_argument("--origins", required=True, help="comma-separated ISO dates")
    bt.add_argument("--truth", choices=(OBSERVED, SELF), default=OBSERVED)

    sub.add_parser("inspect-outliers", parents=[common], help="write outliers.csv only")
    sub.add_parser("dump-posterior", parents=[common], help="write posterior.csv only")
    sub.add_parser("show-config", parents=[common], help="print the effective configuration")
    return parser


def _setup(args):
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    flags = {key: str(getattr(args, attr)) for attr, key in FLAG_KEYS.items() if getattr(args, attr) is not None}
    config = load_config(args.config, flags)
    return config


def _load(args):
    if not args.data or not args.population:
        raise SystemExit("--data and --population are required")
    regions = args.regions.split(",") if args.regions else None
    series = pipeline.load_inputs(args.data, args.population, args.layout, args.deaths_data, regions)
    if not series:
        raise IngestError("no regions parsed")
    return series


def cmd_forecast(args, config) -> int:
    series = _load(args)
    results = pipeline.run_forecast(series, config, args.out_dir, write_samples=args.write_samples)
    failed = [r.region_id for r in results if not r.ok]
    if failed:
        print(f"{len(failed)} region(s) failed: {', '.join(failed)} (see summary.csv)", file=sys.stderr)
    return 0 if len(failed) < len(results) else 1


def cmd_backtest(args, config) -> int:
    series = _load(args)
    origins = [np.datetime64(o.strip(), "D") for o in args.origins.split(",") if o.strip()]
    report = backtest(series, origins, config, truth=args.truth)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_csv(out / "backtest.csv", REPORT_HEADER, report.rows)
    for kind in ("cases", "deaths"):
        if report.n_pairs(kind):
            print(f"{kind}: n={report.n_pairs(kind)} coverage50={report.coverage(50, kind):.3f} "
                  f"coverage80={report.coverage(80, kind):.3f} mae={report.mae(kind):.2f}")
    for region, origin, why in report.skipped:
        print(f"skipped {region} @ {origin}: {why}", file=sys.stderr)
    return 0 if report.rows else 1


def cmd_outliers(args, config) -> int:
    series = _load(args)
    results = []
    for s in series:
        r = pipeline.RegionResult(s.region_id, s)
        _, r.case_outliers, r.death_outliers = pipeline.adjust_series(s, config)
        results.append(r)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_csv(out / "outliers.csv", ["region", "kind", "date", "original", "votes", "adjusted"],
                       pipeline.outlier_rows(results))
    return 0


def cmd_posterior(args, config) -> int:
    series = _load(args)
    rows = []
    for s in series:
        adjusted, _, _ = pipeline.adjust_series(s, config)
        try:
            fit = fit_case_model(adjusted, config)
        except SparseRegime as exc:
            print(f"{s.region_id}: no posterior ({exc})", file=sys.stderr)
            continue
        p = fit.posterior
        rows += [(s.region_id, c.eta, c.omega, c.phi, float(d), float(q)) for c, d, q in zip(p.candidates, p.distances, p.probs)]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_csv(out / "posterior.csv", ["region", "eta", "omega", "phi", "distance", "prob"], rows)
    return 0 if rows else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = _setup(args)
    if args.command == "show-config":
        sys.stdout.write(dump_config(config))
        return 0
    handler = {
        "forecast": cmd_forecast,
        "backtest": cmd_backtest,
        "inspect-outliers": cmd_outliers,
        "dump-posterior": cmd_posterior,
    }[args.command]
    try:
        return handler(args, config)
    except (IngestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
