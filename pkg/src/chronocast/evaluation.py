"""Per-horizon-day MAE/RMSE reports and the encoding ablation."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace

import numpy as np

from .ensemble import EnsembleModel, PipelineConfig, fit_ensemble
from .series import DailySeries


def _check(preds, targets, day: int) -> tuple[np.ndarray, np.ndarray]:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.ndim != 2:
        raise ValueError(f"predictions {preds.shape} and targets {targets.shape} differ")
    if len(preds) == 0:
        raise ValueError("no windows to evaluate")
    if not 1 <= day <= preds.shape[1]:
        raise ValueError(f"day must be in 1..{preds.shape[1]}, got {day}")
    return preds[:, day - 1], targets[:, day - 1]


def mae(preds, targets, day: int) -> float:
    """Mean over windows of |pred - target| on horizon day ``day`` (1-based)."""
    p, t = _check(preds, targets, day)
    return float(np.mean(np.abs(p - t)))


def rmse(preds, targets, day: int) -> float:
    p, t = _check(preds, targets, day)
    return float(np.sqrt(np.mean((p - t) ** 2)))


@dataclass(frozen=True)
class DayMetrics:
    mae: float
    rmse: float


def _mean_of(per_day) -> DayMetrics:
    return DayMetrics(float(np.mean([m.mae for m in per_day])),
                      float(np.mean([m.rmse for m in per_day])))


@dataclass(frozen=True)
class HorizonReport:
    """Per-day errors plus two horizon summaries: ``avg`` is the mean of the
    per-day values, ``pooled`` scores every (window, day) pair at once."""

    model_name: str
    per_day: tuple[DayMetrics, ...]
    avg: DayMetrics
    pooled: DayMetrics
    units: str = "normalized"

    def scaled(self, span: float, units: str = "MW") -> "HorizonReport":
        s = lambda m: DayMetrics(m.mae * span, m.rmse * span)  # noqa: E731
        per_day = tuple(s(m) for m in self.per_day)
        return replace(self, per_day=per_day, avg=_mean_of(per_day),
                       pooled=s(self.pooled), units=units)

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "units": self.units,
            "per_day": [{"day": i + 1, "mae": m.mae, "rmse": m.rmse}
                        for i, m in enumerate(self.per_day)],
            "avg": {"mae": self.avg.mae, "rmse": self.avg.rmse},
            "pooled": {"mae": self.pooled.mae, "rmse": self.pooled.rmse},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["day", "mae", "rmse"])
        for i, m in enumerate(self.per_day):
            w.writerow([i + 1, repr(m.mae), repr(m.rmse)])
        w.writerow(["avg", repr(self.avg.mae), repr(self.avg.rmse)])
        return buf.getvalue()


def horizon_report(preds, targets, model_name: str = "model",
                   units: str = "normalized") -> HorizonReport:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    days = range(1, preds.shape[1] + 1) if preds.ndim == 2 else ()
    per_day = tuple(DayMetrics(mae(preds, targets, d), rmse(preds, targets, d)) for d in days)
    if not per_day:
        raise ValueError("predictions must be (windows, horizon)")
    avg = _mean_of(per_day)
    err = preds - targets
    pooled = DayMetrics(float(np.mean(np.abs(err))), float(np.sqrt(np.mean(err ** 2))))
    return HorizonReport(model_name, per_day, avg, pooled, units)


def evaluate_ensemble(model: EnsembleModel, test_ws, units: str = "normalized"):
    """Reports for the LSTM base, the CNN base and the fused ensemble ("MC")."""
    stacked = model.base_predictions(test_ws.inputs)
    fused = model.fuse(stacked)
    reports = [
        horizon_report(stacked[:, 0], test_ws.targets, "LSTM"),
        horizon_report(stacked[:, 1], test_ws.targets, "CNN"),
        horizon_report(fused, test_ws.targets, "MC"),
    ]
    if units.lower() == "mw":
        reports = [r.scaled(model.norm.span) for r in reports]
    return reports


def comparison_csv(reports: list[HorizonReport]) -> str:
    """Three-model table: one row per day plus an Avg row, MAE and RMSE per model."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["day"]
    for r in reports:
        header += [f"{r.model_name}_mae", f"{r.model_name}_rmse"]
    w.writerow(header)
    for d in range(len(reports[0].per_day)):
        row = [d + 1]
        for r in reports:
            row += [repr(r.per_day[d].mae), repr(r.per_day[d].rmse)]
        w.writerow(row)
    row = ["avg"]
    for r in reports:
        row += [repr(r.avg.mae), repr(r.avg.rmse)]
    w.writerow(row)
    return buf.getvalue()


ABLATION_VARIANTS = {
    "full": "paper",
    "no_cyclical": "no-cyclical",
    "no_calendar": "no-calendar",
    "raw_indices": "raw-indices",
}


def run_ablation(series: DailySeries, variants=tuple(ABLATION_VARIANTS), seed: int = 42,
                 config: PipelineConfig = PipelineConfig(), workers: int | None = None):
    """Fit the full pipeline once per encoding variant with the same seed and
    splits; returns ``{variant: HorizonReport}`` for the fused forecaster."""
    out = {}
    for name in variants:
        if name not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant {name!r}")
        cfg = replace(config, seed=seed, encoding=ABLATION_VARIANTS[name])
        fitted = fit_ensemble(series, cfg, workers)
        fused = fitted.model.predict_batch(fitted.test_windows.inputs)
        out[name] = horizon_report(fused, fitted.test_windows.targets, name)
    return out


def ablation_rows(reports: dict[str, HorizonReport]) -> list[dict]:
    return [
        {"variant": name,
         "day1_rmse": r.per_day[0].rmse, "day1_mae": r.per_day[0].mae,
         "avg7_rmse": r.avg.rmse, "avg7_mae": r.avg.mae}
        for name, r in reports.items()
    ]


def ablation_csv(reports: dict[str, HorizonReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "day1_rmse", "day1_mae", "avg7_rmse", "avg7_mae"])
    for row in ablation_rows(reports):
        w.writerow([row["variant"]] + [repr(row[k]) for k in
                                       ("day1_rmse", "day1_mae", "avg7_rmse", "avg7_mae")])
    return buf.getvalue()


def ablation_json(reports: dict[str, HorizonReport]) -> str:
    return json.dumps({"rows": ablation_rows(reports),
                       "reports": {k: r.to_dict() for k, r in reports.items()}}, indent=2)
