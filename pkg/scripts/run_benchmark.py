"""Fit and evaluate the stacked forecaster on the synthetic benchmark.

    python3 scripts/run_benchmark.py --grid small --seed 42 --out out/benchmark

Prints the three-model horizon table, the ensemble-vs-best-base ratio and
wall-clock timings, and writes the bundle, log and tables to ``--out``.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from chronocast.ensemble import PipelineConfig, fit_ensemble
from chronocast.evaluation import comparison_csv, evaluate_ensemble
from chronocast.synth import synth_series


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42, help="master seed for models")
    ap.add_argument("--data-seed", type=int, default=42, help="synthetic noise seed")
    ap.add_argument("--days", type=int, default=730)
    ap.add_argument("--profile", default="seasonal")
    ap.add_argument("--encoding", default="paper")
    ap.add_argument("--grid", default="small", choices=("small", "paper"))
    ap.add_argument("--units", default="normalized", choices=("normalized", "mw"))
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args(argv)

    series = synth_series(args.data_seed, args.days, args.profile)
    t0 = time.perf_counter()
    fitted = fit_ensemble(series, PipelineConfig(seed=args.seed, encoding=args.encoding,
                                                 grid=args.grid))
    elapsed = time.perf_counter() - t0
    reports = evaluate_ensemble(fitted.model, fitted.test_windows, args.units)
    table = comparison_csv(reports)
    print(table, end="")
    lstm, cnn, mc = (r.avg.mae for r in reports)
    print(f"MC / best base MAE: {mc / min(lstm, cnn):.3f}")
    print(f"windows {fitted.log['windows']}")
    print("timings (s): " + ", ".join(f"{k} {v:.1f}" for k, v in fitted.log["timings_s"].items())
          + f", total {elapsed:.1f}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        fitted.model.save(args.out / "bundle.json")
        (args.out / "train_log.json").write_text(json.dumps(fitted.log, indent=2))
        (args.out / "evaluation.csv").write_text(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
