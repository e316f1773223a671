"""Daily consumption series: loading, validation, min-max scaling, splitting
and sliding windows."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

INPUT_LEN = 120
HORIZON = 7
ONE_DAY = dt.timedelta(days=1)


class SeriesError(ValueError):
    """Raised for malformed, non-contiguous or otherwise unusable series."""


@dataclass(frozen=True)
class DailyRecord:
    date: dt.date
    consumption: float


@dataclass(frozen=True)
class DailySeries:
    """Gap-free, strictly increasing daily consumption values.

    ``values`` is stored as a read-only float64 array; ``scale`` is either
    ``"raw"`` (MW) or ``"normalized"``.
    """

    dates: tuple[dt.date, ...]
    values: np.ndarray
    scale: str = "raw"

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(self.dates))
        if self.scale not in ("raw", "normalized"):
            raise SeriesError(f"unknown scale {self.scale!r}")
        if len(self.dates) != len(values) or values.ndim != 1:
            raise SeriesError("dates and values must be 1-d and equally long")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise SeriesError(f"non-finite consumption on {self.dates[bad]}")
        if self.scale == "raw" and np.any(values < 0):
            bad = int(np.flatnonzero(values < 0)[0])
            raise SeriesError(f"negative consumption on {self.dates[bad]}")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur <= prev:
                raise SeriesError(f"dates not strictly increasing at {cur}")
            if cur - prev != ONE_DAY:
                raise SeriesError(f"gap in dates: missing {prev + ONE_DAY}")

    def __len__(self) -> int:
        return len(self.dates)

    def records(self) -> Iterator[DailyRecord]:
        for d, v in zip(self.dates, self.values):
            yield DailyRecord(d, float(v))

    def slice(self, start: int, stop: int | None = None) -> "DailySeries":
        return DailySeries(self.dates[start:stop], self.values[start:stop], self.scale)

    @classmethod
    def from_values(cls, start: dt.date, values: Sequence[float], scale: str = "raw"):
        dates = [start + i * ONE_DAY for i in range(len(values))]
        return cls(tuple(dates), np.asarray(values, dtype=np.float64), scale)


def _parse_row(row: list[str], lineno: int) -> tuple[dt.date, float]:
    if len(row) != 2:
        raise SeriesError(f"line {lineno}: expected 2 fields 'date,consumption', got {len(row)}")
    try:
        date = dt.date.fromisoformat(row[0].strip())
    except ValueError:
        raise SeriesError(f"line {lineno}: bad ISO-8601 date {row[0]!r}") from None
    try:
        value = float(row[1].strip())
    except ValueError:
        raise SeriesError(f"line {lineno}: bad consumption value {row[1]!r}") from None
    if not math.isfinite(value):
        raise SeriesError(f"line {lineno}: non-finite consumption {row[1]!r}")
    if value < 0:
        raise SeriesError(f"line {lineno}: negative consumption {value}")
    return date, value


def load_csv(path: str | Path, fill_gaps: str | None = None) -> DailySeries:
    """Read a ``date,consumption`` CSV into a validated raw series.

    Rows may come in any order; they are sorted by date. Duplicate dates are
    rejected. Missing days are rejected unless ``fill_gaps="linear"``, in
    which case they are linearly interpolated and each filled date is logged.
    """
    if fill_gaps not in (None, "linear"):
        raise SeriesError(f"unknown gap-fill mode {fill_gaps!r}")
    rows: dict[dt.date, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == ["date", "consumption"]:
                continue
            date, value = _parse_row(row, lineno)
            if date in rows:
                raise SeriesError(f"line {lineno}: duplicate date {date}")
            rows[date] = value
    if not rows:
        raise SeriesError(f"{path}: no data rows")

    dates = sorted(rows)
    values = [rows[d] for d in dates]
    if fill_gaps == "linear":
        dates, values = _fill_linear(dates, values)
    return DailySeries(tuple(dates), np.asarray(values), "raw")


def _fill_linear(dates: list[dt.date], values: list[float]):
    out_dates, out_values = [dates[0]], [values[0]]
    for d, v in zip(dates[1:], values[1:]):
        gap = (d - out_dates[-1]).days
        v0 = out_values[-1]
        for k in range(1, gap):
            filled = out_dates[-1] + ONE_DAY
            out_dates.append(filled)
            out_values.append(v0 + (v - v0) * k / gap)
            log.info("filled missing date %s by linear interpolation", filled)
        out_dates.append(d)
        out_values.append(v)
    return out_dates, out_values


def write_csv(series: DailySeries, path: str | Path, precision: int = 3) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("date,consumption\n")
        for d, v in zip(series.dates, series.values):
            fh.write(f"{d.isoformat()},{v:.{precision}f}\n")


@dataclass(frozen=True)
class NormalizationParams:
    min: float
    max: float

    def __post_init__(self):
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise SeriesError("normalization bounds must be finite")
        if not self.max > self.min:
            raise SeriesError(f"max ({self.max}) must exceed min ({self.min})")

    @property
    def span(self) -> float:
        return self.max - self.min


def fit_minmax(series: DailySeries) -> NormalizationParams:
    if series.scale != "raw":
        raise SeriesError("fit_minmax expects a raw-scale series")
    if len(series) < 2:
        raise SeriesError("need at least 2 values to fit min-max scaling")
    lo, hi = float(series.values.min()), float(series.values.max())
    if lo == hi:
        raise SeriesError("constant series cannot be min-max scaled")
    return NormalizationParams(lo, hi)


def normalize(series: DailySeries, params: NormalizationParams) -> DailySeries:
    # no clipping: values outside the fitting window may leave [0, 1]
    if series.scale != "raw":
        raise SeriesError("normalize expects a raw-scale series")
    return DailySeries(series.dates, (series.values - params.min) / params.span, "normalized")


def denormalize(series: DailySeries, params: NormalizationParams) -> DailySeries:
    if series.scale != "normalized":
        raise SeriesError("denormalize expects a normalized series")
    return DailySeries(series.dates, series.values * params.span + params.min, "raw")


def chronological_split(
    series: DailySeries, train_fraction: float = 0.8, min_len: int = INPUT_LEN + HORIZON
) -> tuple[DailySeries, DailySeries]:
    """First ``floor(n * train_fraction)`` days to train, the rest to test."""
    if not 0 < train_fraction < 1:
        raise SeriesError("train_fraction must lie strictly between 0 and 1")
    cut = math.floor(len(series) * train_fraction)
    train, test = series.slice(0, cut), series.slice(cut)
    for name, part in (("train", train), ("test", test)):
        if len(part) < min_len:
            warnings.warn(
                f"{name} split has {len(part)} days, fewer than {min_len} needed "
                "for a self-contained window",
                stacklevel=2,
            )
    return train, test


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised pairs: ``inputs`` (N, input_len, F), ``targets`` (N, horizon).

    ``starts`` holds the row offset of each window's first input day so a
    window can be mapped back to calendar dates.
    """

    inputs: np.ndarray
    targets: np.ndarray
    input_len: int = INPUT_LEN
    horizon: int = HORIZON
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.targets.ndim != 2:
            raise SeriesError("inputs must be (N, L, F) and targets (N, H)")
        if len(self.inputs) != len(self.targets):
            raise SeriesError("inputs and targets must have equal counts")
        if self.inputs.shape[1] != self.input_len or self.targets.shape[1] != self.horizon:
            raise SeriesError("window shapes disagree with input_len/horizon")

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def feature_count(self) -> int:
        return self.inputs.shape[2]

    def subset(self, index) -> "WindowedDataset":
        index = np.arange(len(self))[index]
        starts = self.starts[index] if len(self.starts) else self.starts
        return WindowedDataset(
            self.inputs[index], self.targets[index], self.input_len, self.horizon, starts
        )


def make_windows(
    features,
    input_len: int = INPUT_LEN,
    horizon: int = HORIZON,
    target_from: int = 0,
    target_to: int | None = None,
    target: np.ndarray | None = None,
) -> WindowedDataset:
    """Slide a window over a FeatureFrame (or an (n, F) matrix plus ``target``).

    Window ``t`` takes rows ``[t, t + input_len)`` as input and target values
    ``[t + input_len, t + input_len + horizon)``. Only windows whose target
    days all lie in ``[target_from, target_to)`` are kept, which lets a test
    window draw its input history from the training period.
    """
    if hasattr(features, "matrix"):
        matrix, target = features.matrix, features.target
    else:
        matrix = features
        if target is None:
            raise SeriesError("a bare matrix needs an explicit target vector")
    matrix = np.asarray(matrix, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    n = len(matrix)
    if len(target) != n:
        raise SeriesError("feature matrix and target must have equal length")
    if input_len < 1 or horizon < 1:
        raise SeriesError("input_len and horizon must be positive")
    if n < input_len + horizon:
        raise SeriesError(
            f"need at least {input_len + horizon} rows for one window, got {n}"
        )
    target_to = n if target_to is None else target_to
    first = max(0, target_from - input_len)
    last = min(n, target_to) - input_len - horizon
    if last < first:
        raise SeriesError(
            f"no window has its {horizon}-day target inside rows [{target_from}, {target_to})"
        )
    starts = np.arange(first, last + 1)
    view = np.lib.stride_tricks.sliding_window_view(matrix, input_len, axis=0)
    inputs = np.ascontiguousarray(view[starts].transpose(0, 2, 1))
    tview = np.lib.stride_tricks.sliding_window_view(target[input_len:], horizon)
    targets = np.ascontiguousarray(tview[starts])
    return WindowedDataset(inputs, targets, input_len, horizon, starts)
