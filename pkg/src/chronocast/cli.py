"""Command-line entry point: ``chronocast <command> [options]``.

Exit codes: 0 success, 1 computation failure, 2 input or usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import evaluation
from .config import ConfigError, RunConfig, resolve
from .ensemble import EnsembleModel, MetaTrainConfig, PipelineConfig, fit_ensemble
from .features import (
    EncodingConfig,
    FeatureError,
    build_feature_frame,
    correlation_report,
    group_summary,
    group_summary_csv,
    NAMED_ENCODINGS,
    named_encoding,
)
from .nn import Divergence
from .series import (
    DailySeries,
    SeriesError,
    chronological_split,
    fit_minmax,
    load_csv,
    make_windows,
    normalize,
    write_csv,
)
from .synth import PROFILES, synth_series

log = logging.getLogger("chronocast")

SUMMARY_GROUPS = ("month_in_year", "week_in_year", "day_in_week", "business_day")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master random seed (default 42)")
    p.add_argument("--config", help="flat key = value run configuration file")
    p.add_argument("--out-dir", dest="out_dir", help="directory for emitted artifacts")
    p.add_argument("--units", choices=("normalized", "mw"), help="report units")
    p.add_argument("--fill-gaps", dest="fill_gaps", choices=("linear",),
                   help="interpolate missing days instead of rejecting the file")
    p.add_argument("-v", "--verbose", action="store_true")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", dest="input_csv", help="date,consumption CSV (default: synthetic)")
    p.add_argument("--days", dest="synth_days", type=int, help="synthetic series length")
    p.add_argument("--profile", dest="synth_profile", choices=sorted(PROFILES))


def _train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encoding", help=f"{'|'.join(NAMED_ENCODINGS)} or an encoding file")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--grid", choices=("paper", "small"), help="meta grid (default paper)")
    p.add_argument("--base-epochs", dest="base_epochs", type=int,
                   help="override the 80 base-model epochs")
    p.add_argument("--meta-batch-size", dest="meta_batch_size", type=int)
    p.add_argument("--refit-bases", dest="refit_bases", action="store_const", const=True,
                   help="retrain the bases on the whole training split after stacking")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chronocast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic consumption CSV")
    _common(p)
    p.add_argument("--days", dest="synth_days", type=int)
    p.add_argument("--profile", dest="synth_profile", choices=sorted(PROFILES))
    p.add_argument("--start", type=dt.date.fromisoformat, help="first date (ISO)")
    p.add_argument("--output", help="CSV path (default <out-dir>/synth.csv)")

    p = sub.add_parser("analyze", help="correlation study and group summaries")
    _common(p)
    _data_args(p)

    p = sub.add_parser("train", help="fit bases and meta-regressors, write a bundle")
    _common(p)
    _data_args(p)
    _train_args(p)

    p = sub.add_parser("forecast", help="7-day forecast from a trained bundle")
    _common(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--input", dest="input_csv", required=True)
    p.add_argument("--date", type=dt.date.fromisoformat,
                   help="last observed day (default: last day in the CSV)")

    p = sub.add_parser("evaluate", help="LSTM / CNN / MC horizon reports on the test split")
    _common(p)
    p.add_argument("--bundle", required=True)
    _data_args(p)

    p = sub.add_parser("ablate", help="encoding ablation over the four variants")
    _common(p)
    _data_args(p)
    _train_args(p)
    p.add_argument("--variants", nargs="+", choices=list(evaluation.ABLATION_VARIANTS))
    return parser


def _load_series(cfg: RunConfig) -> DailySeries:
    if cfg.input_csv:
        if not Path(cfg.input_csv).is_file():
            raise UsageError(f"input file not found: {cfg.input_csv}")
        return load_csv(cfg.input_csv, cfg.fill_gaps)
    return synth_series(cfg.seed, cfg.synth_days, cfg.synth_profile)


def _encoding(name: str) -> EncodingConfig:
    if name in NAMED_ENCODINGS:
        return named_encoding(name)
    if Path(name).is_file():
        return EncodingConfig.from_file(name)
    raise UsageError(f"unknown encoding {name!r} (not a variant name or a file)")


def _pipeline_config(cfg: RunConfig) -> PipelineConfig:
    return PipelineConfig(
        seed=cfg.seed,
        encoding=_encoding(cfg.encoding),
        train_fraction=cfg.train_fraction,
        input_len=cfg.input_len,
        horizon=cfg.horizon,
        grid=cfg.grid,
        base_epochs=cfg.base_epochs,
        meta=MetaTrainConfig(batch_size=cfg.meta_batch_size),
        refit_bases=cfg.refit_bases,
    )


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


def cmd_synth(cfg: RunConfig, args) -> int:
    kwargs = {"start": args.start} if args.start else {}
    series = synth_series(cfg.seed, cfg.synth_days, cfg.synth_profile, **kwargs)
    path = Path(args.output) if args.output else _out(cfg) / "synth.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(series, path)
    print(path)
    return 0


def cmd_analyze(cfg: RunConfig, args) -> int:
    series = _load_series(cfg)
    report = correlation_report(series)
    out = _out(cfg)
    _write(out / "correlation.csv", report.to_csv())
    _write(out / "correlation.json", report.to_json())
    groups = {}
    for feat in SUMMARY_GROUPS:
        summary = group_summary(series, feat)
        _write(out / f"group_{feat}.csv", group_summary_csv(summary, feat))
        groups[feat] = {str(k): asdict(v) for k, v in summary.items()}
    _write(out / "groups.json", json.dumps(groups, indent=2))
    print(f"{'feature':<15}{'r_raw':>10}{'r_sin':>10}{'r_cos':>10}  selected")
    for name, fc in report.features.items():
        print(f"{name:<15}{fc.r_raw:>10.4f}{fc.r_sin:>10.4f}{fc.r_cos:>10.4f}  {fc.selected}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    series = _load_series(cfg)
    fitted = fit_ensemble(series, _pipeline_config(cfg))
    out = _out(cfg)
    fitted.model.save(out / "bundle.json")
    _write(out / "train_log.json", json.dumps(fitted.log, indent=2))
    for m in fitted.log["meta"]:
        print(f"day {m['day']}: {m['label']}  val MSE {m['validation_mse']:.6g}")
    print(out / "bundle.json")
    return 0


def _history_frame(model: EnsembleModel, series: DailySeries):
    frame = build_feature_frame(normalize(series, model.norm), model.encoding)
    if frame.names != model.encoding.column_names():
        raise UsageError("feature columns do not match the bundle encoding")
    return frame


def cmd_forecast(cfg: RunConfig, args) -> int:
    model = EnsembleModel.load(args.bundle)
    series = _load_series(cfg)
    end = args.date or series.dates[-1]
    if end not in series.dates:
        raise UsageError(f"date {end} is not in {cfg.input_csv}")
    stop = series.dates.index(end) + 1
    if stop < model.input_len:
        raise UsageError(f"forecast needs {model.input_len} days of history ending {end}, "
                         f"got {stop} ({model.input_len - stop} short)")
    history = series.slice(stop - model.input_len, stop)
    window = _history_frame(model, history).matrix
    normalized, mw = model.predict(window, denormalize=True)
    dates = [end + dt.timedelta(days=k + 1) for k in range(model.horizon)]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "normalized", "mw"])
    for d, n, m in zip(dates, normalized, mw):
        w.writerow([d.isoformat(), repr(float(n)), repr(float(m))])
    out = _out(cfg)
    _write(out / "forecast.csv", buf.getvalue())
    _write(out / "forecast.json", json.dumps({
        "history_end": end.isoformat(),
        "forecast": [{"date": d.isoformat(), "normalized": float(n), "mw": float(m)}
                     for d, n, m in zip(dates, normalized, mw)],
    }, indent=2))
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    model = EnsembleModel.load(args.bundle)
    series = _load_series(cfg)
    frame = _history_frame(model, series)
    cut = int(np.floor(len(series) * model.train_fraction))
    test_ws = make_windows(frame, model.input_len, model.horizon, target_from=cut)
    reports = evaluation.evaluate_ensemble(model, test_ws, cfg.units)
    out = _out(cfg)
    table = evaluation.comparison_csv(reports)
    _write(out / "evaluation.csv", table)
    _write(out / "evaluation.json", json.dumps(
        {"test_windows": len(test_ws), "reports": [r.to_dict() for r in reports]}, indent=2))
    for metric in ("mae", "rmse"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["day"] + [r.model_name for r in reports])
        for d in range(model.horizon):
            w.writerow([d + 1] + [repr(getattr(r.per_day[d], metric)) for r in reports])
        _write(out / f"plot_{metric}_per_day.csv", buf.getvalue())
    sys.stdout.write(table)
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    series = _load_series(cfg)
    variants = args.variants or list(evaluation.ABLATION_VARIANTS)
    pcfg = _pipeline_config(cfg)
    reports = evaluation.run_ablation(series, variants, cfg.seed, pcfg)
    if cfg.units.lower() == "mw":
        span = fit_minmax(chronological_split(series, cfg.train_fraction, 1)[0]).span
        reports = {k: r.scaled(span) for k, r in reports.items()}
    out = _out(cfg)
    table = evaluation.ablation_csv(reports)
    _write(out / "ablation.csv", table)
    _write(out / "ablation.json", evaluation.ablation_json(reports))
    sys.stdout.write(table)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}

_OVERRIDE_KEYS = ("seed", "out_dir", "units", "fill_gaps", "input_csv", "synth_days",
                  "synth_profile", "encoding", "train_fraction", "grid", "base_epochs",
                  "meta_batch_size", "refit_bases")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
        cfg = resolve(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError, SeriesError, FeatureError, FileNotFoundError) as exc:
        print(f"chronocast: error: {exc}", file=sys.stderr)
        return 2
    except (Divergence, FloatingPointError, ValueError) as exc:
        print(f"chronocast: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
