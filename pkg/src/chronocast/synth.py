"""Synthetic daily consumption with a known closed form.

    c(d) = base + annual * cos(2*pi * day_in_year(d) / 365)
                - weekend_dip * [d is Saturday or Sunday]
                - holiday_dip * [d is a French public holiday]
                + noise_sd * N(0, 1)

The annual term peaks in winter, as French load does. Noise is drawn from
``numpy.random.default_rng(seed)``, one draw per day in date order.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .features import is_french_holiday
from .series import HORIZON, INPUT_LEN, DailySeries, SeriesError


@dataclass(frozen=True)
class SynthProfile:
    base: float = 55_000.0
    annual: float = 12_000.0
    weekend_dip: float = 7_000.0
    holiday_dip: float = 6_000.0
    noise_sd: float = 1_500.0


PROFILES = {
    "seasonal": SynthProfile(),
    "noiseless": SynthProfile(noise_sd=0.0),
}

BENCHMARK_SEED = 42
BENCHMARK_DAYS = 730
BENCHMARK_START = dt.date(2022, 1, 1)


def synth_series(
    seed: int = BENCHMARK_SEED,
    days: int = BENCHMARK_DAYS,
    profile: str | SynthProfile = "seasonal",
    start: dt.date = BENCHMARK_START,
) -> DailySeries:
    if days < INPUT_LEN + HORIZON + 1:
        raise SeriesError(f"need at least {INPUT_LEN + HORIZON + 1} days, got {days}")
    if isinstance(profile, str):
        try:
            profile = PROFILES[profile]
        except KeyError:
            raise SeriesError(f"unknown synthetic profile {profile!r}") from None
    rng = np.random.default_rng(seed)
    dates = [start + dt.timedelta(days=i) for i in range(days)]
    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=np.float64)
    weekend = np.array([d.isoweekday() >= 6 for d in dates], dtype=np.float64)
    holiday = np.array([is_french_holiday(d) for d in dates], dtype=np.float64)
    values = (
        profile.base
        + profile.annual * np.cos(2.0 * np.pi * doy / 365.0)
        - profile.weekend_dip * weekend
        - profile.holiday_dip * holiday
        + profile.noise_sd * rng.standard_normal(days)
    )
    # CSV output keeps 3 decimals; round here so a written file reloads identically
    return DailySeries(tuple(dates), np.round(values, 3), "raw")
