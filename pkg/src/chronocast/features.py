"""Calendar features, French business days, cyclical encoding and the
correlation study used to pick an encoding per feature."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .series import DailySeries, SeriesError

FEATURES = (
    "day_in_year",
    "week_in_year",
    "month_in_year",
    "day_in_week",
    "day_in_month",
    "week_in_month",
    "business_day",
)

# natural period of each feature; business_day has no cycle
DEFAULT_CYCLES = {
    "day_in_week": 7.0,
    "day_in_month": 31.0,
    "day_in_year": 365.0,
    "week_in_month": 5.0,
    "week_in_year": 52.0,
    "month_in_year": 12.0,
}

CHOICES = ("raw", "sin", "cos", "drop")

# near-zero correlation with consumption; reported but never selected
ALWAYS_DROPPED = ("day_in_month", "week_in_month")


class FeatureError(ValueError):
    pass


def easter(year: int) -> dt.date:
    """Gregorian Easter Sunday (anonymous Gregorian computus)."""
    a = year % 19
    b, c = divmod(year, 100)
    d, e = divmod(b, 4)
    f = (b + 8) // 25
    g = (b - f + 1) // 3
    h = (19 * a + b - d - g + 15) % 30
    i, k = divmod(c, 4)
    l = (32 + 2 * e + 2 * i - h - k) % 7
    m = (a + 11 * h + 22 * l) // 451
    month, day = divmod(h + l - 7 * m + 114, 31)
    return dt.date(year, month, day + 1)


@lru_cache(maxsize=None)
def french_holidays(year: int) -> frozenset[dt.date]:
    """French public holidays of ``year``: eight fixed dates plus Easter Monday,
    Ascension and Whit Monday (ten distinct dates when Ascension is 1 or 8 May)."""
    fixed = [(1, 1), (5, 1), (5, 8), (7, 14), (8, 15), (11, 1), (11, 11), (12, 25)]
    sunday = easter(year)
    movable = [sunday + dt.timedelta(days=k) for k in (1, 39, 50)]
    return frozenset([dt.date(year, m, d) for m, d in fixed] + movable)


def is_french_holiday(date: dt.date) -> int:
    return int(date in french_holidays(date.year))


@dataclass(frozen=True)
class CalendarFeatures:
    day_in_week: int  # Monday = 1
    day_in_month: int
    day_in_year: int
    week_in_month: int
    week_in_year: int  # ISO-8601 week
    month_in_year: int
    business_day: int

    def get(self, name: str) -> int:
        if name not in FEATURES:
            raise FeatureError(f"unknown calendar feature {name!r}")
        return getattr(self, name)


def extract_calendar(date: dt.date) -> CalendarFeatures:
    iso = date.isocalendar()
    dow = iso[2]
    business = int(dow <= 5 and not is_french_holiday(date))
    return CalendarFeatures(
        day_in_week=dow,
        day_in_month=date.day,
        day_in_year=date.timetuple().tm_yday,
        week_in_month=math.ceil(date.day / 7),
        week_in_year=iso[1],
        month_in_year=date.month,
        business_day=business,
    )


def calendar_matrix(dates) -> dict[str, np.ndarray]:
    """Raw integer calendar features for each date, keyed by feature name."""
    rows = [extract_calendar(d) for d in dates]
    return {
        name: np.array([getattr(r, name) for r in rows], dtype=np.float64)
        for name in FEATURES
    }


def _check_cycle(time_cycle) -> None:
    if not np.all(np.asarray(time_cycle) > 0):
        raise FeatureError(f"time cycle must be positive, got {time_cycle}")


def cyclical_sin(value, time_cycle: float):
    _check_cycle(time_cycle)
    return np.sin(2.0 * np.pi * np.asarray(value, dtype=np.float64) / time_cycle)


def cyclical_cos(value, time_cycle: float):
    _check_cycle(time_cycle)
    return np.cos(2.0 * np.pi * np.asarray(value, dtype=np.float64) / time_cycle)


def pearson_r(x, y) -> float:
    """Pearson correlation, clamped to [-1, 1] against rounding."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise FeatureError("pearson_r needs two 1-d vectors of equal length")
    if len(x) < 2:
        raise FeatureError("pearson_r needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise FeatureError("pearson_r is undefined for a constant vector")
    r = np.dot(dx, dy) / (math.sqrt(sxx) * math.sqrt(syy))
    return float(min(1.0, max(-1.0, r)))


@dataclass(frozen=True)
class FeatureCorrelation:
    r_raw: float
    r_sin: float
    r_cos: float
    selected: str


def select_encoding(r_raw: float, r_sin: float, r_cos: float) -> str:
    """Largest |r|; ties go to the least transformation (raw, sin, cos)."""
    best, best_abs = "raw", abs(r_raw)
    for name, r in (("sin", r_sin), ("cos", r_cos)):
        if abs(r) > best_abs:
            best, best_abs = name, abs(r)
    return best


@dataclass(frozen=True)
class CorrelationReport:
    features: dict[str, FeatureCorrelation]

    def rows(self) -> list[dict]:
        return [
            {"feature": name, "r_raw": fc.r_raw, "r_sin": fc.r_sin,
             "r_cos": fc.r_cos, "selected": fc.selected}
            for name, fc in self.features.items()
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["feature", "r_raw", "r_sin", "r_cos", "selected"])
        for row in self.rows():
            writer.writerow([row["feature"], repr(row["r_raw"]), repr(row["r_sin"]),
                             repr(row["r_cos"]), row["selected"]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"features": self.rows()}, indent=2)

    def encoding(self) -> "EncodingConfig":
        """Encoding config following this report's selections."""
        return EncodingConfig({name: fc.selected for name, fc in self.features.items()})


def correlation_report(series: DailySeries, cycles: Mapping[str, float] | None = None):
    cycles = {**DEFAULT_CYCLES, **(cycles or {})}
    raw = calendar_matrix(series.dates)
    y = series.values
    out = {}
    for name in FEATURES:
        x = raw[name]
        r_raw = pearson_r(x, y)
        if name == "business_day":
            # binary flag is not transformed
            r_sin = r_cos = r_raw
        else:
            r_sin = pearson_r(cyclical_sin(x, cycles[name]), y)
            r_cos = pearson_r(cyclical_cos(x, cycles[name]), y)
        if name in ALWAYS_DROPPED:
            selected = "drop"
        else:
            selected = select_encoding(r_raw, r_sin, r_cos)
        out[name] = FeatureCorrelation(r_raw, r_sin, r_cos, selected)
    return CorrelationReport(out)


@dataclass(frozen=True)
class EncodingConfig:
    """Per-feature encoding choice and cycle length.

    Features missing from ``choices`` are dropped.
    """

    choices: dict[str, str]
    cycles: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_CYCLES))
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "choices", dict(self.choices))
        object.__setattr__(self, "cycles", {**DEFAULT_CYCLES, **self.cycles})
        for feat, choice in self.choices.items():
            if feat not in FEATURES:
                raise FeatureError(f"unknown calendar feature {feat!r}")
            if choice not in CHOICES:
                raise FeatureError(f"unknown encoding {choice!r} for {feat}")
            if feat == "business_day" and choice in ("sin", "cos"):
                raise FeatureError("business_day is binary and cannot be trig-encoded")
        for feat, cycle in self.cycles.items():
            if feat not in DEFAULT_CYCLES:
                raise FeatureError(f"no cycle applies to {feat!r}")
            _check_cycle(cycle)

    def active(self) -> list[tuple[str, str]]:
        """(feature, choice) pairs that produce a column, in canonical order."""
        return [(f, self.choices[f]) for f in FEATURES
                if self.choices.get(f, "drop") != "drop"]

    def column_names(self) -> list[str]:
        return ["consumption"] + [f"{f}_{c}" for f, c in self.active()]

    @property
    def feature_count(self) -> int:
        return 1 + len(self.active())

    def to_dict(self) -> dict:
        return {"name": self.name, "choices": dict(self.choices), "cycles": dict(self.cycles)}

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingConfig":
        return cls(d["choices"], d.get("cycles", {}), d.get("name", "custom"))

    @classmethod
    def from_file(cls, path: str | Path) -> "EncodingConfig":
        """Parse ``feature = choice`` lines; ``cycle.<feature> = N`` sets a cycle."""
        choices, cycles = {}, {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FeatureError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key.startswith("cycle."):
                try:
                    cycles[key[6:]] = float(value)
                except ValueError:
                    raise FeatureError(f"{path}:{lineno}: bad cycle {value!r}") from None
            else:
                choices[key] = value
        return cls(choices, cycles, Path(path).stem)


NAMED_ENCODINGS = {
    "paper": {"day_in_year": "cos", "week_in_year": "cos", "month_in_year": "cos",
              "day_in_week": "raw", "business_day": "raw"},
    "paper-table": {"day_in_year": "cos", "week_in_year": "cos", "month_in_year": "cos",
                    "day_in_week": "sin", "business_day": "raw"},
    "no-cyclical": {"day_in_year": "raw", "week_in_year": "raw", "month_in_year": "raw",
                    "day_in_week": "raw", "business_day": "raw"},
    "no-calendar": {"day_in_year": "cos", "week_in_year": "cos", "month_in_year": "cos"},
    "raw-indices": {"day_in_year": "raw", "week_in_year": "raw", "month_in_year": "raw",
                    "day_in_week": "raw"},
}


def named_encoding(name: str) -> EncodingConfig:
    try:
        return EncodingConfig(NAMED_ENCODINGS[name], name=name)
    except KeyError:
        raise FeatureError(
            f"unknown encoding {name!r}; choose from {', '.join(NAMED_ENCODINGS)}"
        ) from None


@dataclass(frozen=True)
class FeatureFrame:
    dates: tuple[dt.date, ...]
    columns: dict[str, np.ndarray]
    config: EncodingConfig

    def __post_init__(self):
        n = len(self.dates)
        for name, col in self.columns.items():
            if len(col) != n:
                raise FeatureError(f"column {name} has length {len(col)}, expected {n}")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack([self.columns[c] for c in self.columns])

    @property
    def target(self) -> np.ndarray:
        return self.columns["consumption"]


def encode_column(values: np.ndarray, choice: str, cycle: float | None) -> np.ndarray:
    if choice == "raw":
        return values.astype(np.float64)
    if choice == "sin":
        return cyclical_sin(values, cycle)
    if choice == "cos":
        return cyclical_cos(values, cycle)
    raise FeatureError(f"cannot encode with {choice!r}")


def build_feature_frame(series: DailySeries, config: EncodingConfig) -> FeatureFrame:
    if series.scale != "normalized":
        raise FeatureError("feature frames are built from a normalized series")
    raw = calendar_matrix(series.dates)
    columns = {"consumption": np.array(series.values, dtype=np.float64)}
    for feat, choice in config.active():
        columns[f"{feat}_{choice}"] = encode_column(raw[feat], choice, config.cycles.get(feat))
    return FeatureFrame(series.dates, columns, config)


@dataclass(frozen=True)
class QuartileSummary:
    count: int
    min: float
    q1: float
    median: float
    q3: float
    max: float


def group_summary(series: DailySeries, group_by: str) -> dict[int, QuartileSummary]:
    """Five-number summary (linear-interpolated quartiles) per feature value."""
    if group_by not in FEATURES:
        raise FeatureError(f"unknown calendar feature {group_by!r}")
    keys = calendar_matrix(series.dates)[group_by].astype(int)
    out = {}
    for key in np.unique(keys):
        vals = series.values[keys == key]
        q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
        out[int(key)] = QuartileSummary(len(vals), *(float(v) for v in q))
    return out


def group_summary_csv(summary: dict[int, QuartileSummary], group_by: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([group_by, "count", "min", "q1", "median", "q3", "max"])
    for key, s in summary.items():
        writer.writerow([key, s.count, repr(s.min), repr(s.q1), repr(s.median),
                         repr(s.q3), repr(s.max)])
    return buf.getvalue()
