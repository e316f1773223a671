import datetime as dt
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chronocast.ensemble import PipelineConfig, fit_ensemble
from chronocast.series import DailySeries
from chronocast.synth import synth_series

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

BENCHMARK_CONFIG = PipelineConfig(seed=42, grid="small")

_acceptance: dict[int, tuple[str, str, str]] = {}


@pytest.fixture(scope="session")
def benchmark_series() -> DailySeries:
    return synth_series()


@pytest.fixture(scope="session")
def benchmark_fit(benchmark_series):
    """Seed-42 benchmark pipeline with the 8-candidate grid, fitted once."""
    import time
    t0 = time.perf_counter()
    fitted = fit_ensemble(benchmark_series, BENCHMARK_CONFIG)
    fitted.log["wall_s"] = time.perf_counter() - t0
    return fitted


@pytest.fixture
def ramp():
    def make(n, start=dt.date(2023, 1, 1), scale="raw"):
        return DailySeries.from_values(start, np.arange(n, dtype=float) + 100.0, scale)
    return make


@pytest.fixture
def criterion():
    """Record one acceptance criterion's outcome for the end-of-run summary."""

    @contextmanager
    def record(number: int, title: str):
        detail: dict = {}
        try:
            yield detail
        except pytest.skip.Exception as exc:
            _acceptance[number] = ("SKIP", title, str(exc.msg))
            raise
        except BaseException:
            _acceptance[number] = ("FAIL", title, detail.get("text", ""))
            raise
        _acceptance[number] = ("PASS", title, detail.get("text", ""))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        status, title, text = _acceptance[number]
        line = f"[{status}] criterion {number:>2}: {title}"
        terminalreporter.write_line(line + (f" ({text})" if text else ""))
