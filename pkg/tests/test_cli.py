import csv
import json

import numpy as np
import pytest

from chronocast import cli
from chronocast.config import ConfigError, RunConfig, load_config_file, resolve
from chronocast.features import extract_calendar, is_french_holiday
from chronocast.nn import Divergence
from chronocast.series import load_csv

FAST_CONFIG = """\
# tiny run for tests
synth_days = 300
input_len = 21
base_epochs = 2
grid = small
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "fast.cfg").write_text(FAST_CONFIG)
    return d


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def trained(workdir):
    out = workdir / "run"
    assert run("synth", "--days", 300, "--out-dir", out) == 0
    assert run("train", "--config", workdir / "fast.cfg", "--out-dir", out) == 0
    return out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSynth:
    def test_byte_identical(self, tmp_path):
        assert run("synth", "--days", 365, "--output", tmp_path / "a.csv") == 0
        assert run("synth", "--days", 365, "--output", tmp_path / "b.csv") == 0
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert len(load_csv(tmp_path / "a.csv")) == 365

    def test_weekly_and_holiday_dips(self, tmp_path):
        run("synth", "--days", 1460, "--output", tmp_path / "s.csv")
        s = load_csv(tmp_path / "s.csv")
        weekend = np.array([d.isoweekday() >= 6 for d in s.dates])
        hol = np.array([bool(is_french_holiday(d)) for d in s.dates])
        weekday = ~weekend & ~hol
        assert s.values[weekend].mean() < s.values[weekday].mean()
        # holiday weekdays vs ordinary weekdays on the same calendar days-of-year
        doy = np.array([extract_calendar(d).day_in_year for d in s.dates])
        resid = s.values - 12_000 * np.cos(2 * np.pi * doy / 365)
        h = resid[hol & ~weekend]
        dip = resid[weekday].mean() - h.mean()
        assert abs(dip - 6000) < 4 * 1500 / np.sqrt(len(h))

    def test_too_short(self, tmp_path, capsys):
        assert run("synth", "--days", 100, "--out-dir", tmp_path) == 2
        assert "128" in capsys.readouterr().err


class TestAnalyze:
    def test_outputs(self, tmp_path, capsys):
        assert run("analyze", "--out-dir", tmp_path) == 0
        rows = {r["feature"]: r for r in json.loads((tmp_path / "correlation.json").read_text())
                ["features"]}
        assert abs(rows["day_in_year"]["r_cos"]) > abs(rows["day_in_year"]["r_raw"])
        for f in ("month_in_year", "week_in_year", "day_in_week", "business_day"):
            assert (tmp_path / f"group_{f}.csv").exists()
        assert len(read_csv(tmp_path / "group_month_in_year.csv")) == 13
        assert "day_in_year" in capsys.readouterr().out

    def test_missing_input(self, tmp_path):
        assert run("analyze", "--input", tmp_path / "nope.csv", "--out-dir", tmp_path) == 2

    def test_gap_rejected_unless_filled(self, tmp_path):
        p = tmp_path / "gap.csv"
        rows = [f"2023-01-{d:02d},{50000 + d}" for d in range(1, 32) if d != 10]
        rows += [f"2023-02-{d:02d},{50000 + d}" for d in range(1, 29)]
        p.write_text("\n".join(rows) + "\n")
        assert run("analyze", "--input", p, "--out-dir", tmp_path) == 2
        assert run("analyze", "--input", p, "--fill-gaps", "linear", "--out-dir", tmp_path) == 0


class TestTrainForecastEvaluate:
    def test_train_log(self, trained):
        log = json.loads((trained / "train_log.json").read_text())
        assert len(log["meta"]) == 7 and log["grid_size"] == 8
        assert {"bases", "metas"} <= set(log["timings_s"])

    def test_forecast_twice_identical(self, trained, capsys):
        args = ("forecast", "--bundle", trained / "bundle.json", "--input", trained / "synth.csv",
                "--out-dir", trained / "f")
        assert run(*args) == 0
        first = (trained / "f" / "forecast.csv").read_bytes()
        assert run(*args) == 0
        assert (trained / "f" / "forecast.csv").read_bytes() == first
        rows = read_csv(trained / "f" / "forecast.csv")
        assert rows[0] == ["date", "normalized", "mw"] and len(rows) == 8
        assert rows[1][0] == "2022-10-28"  # day after the last of 300 synthetic days

    def test_forecast_with_date(self, trained):
        assert run("forecast", "--bundle", trained / "bundle.json", "--input",
                   trained / "synth.csv", "--date", "2022-06-30", "--out-dir", trained / "g") == 0
        rows = read_csv(trained / "g" / "forecast.csv")
        assert rows[1][0] == "2022-07-01"

    def test_forecast_short_history(self, trained, capsys):
        code = run("forecast", "--bundle", trained / "bundle.json", "--input",
                   trained / "synth.csv", "--date", "2022-01-10", "--out-dir", trained / "h")
        assert code == 2
        assert "11 short" in capsys.readouterr().err

    def test_forecast_date_missing(self, trained, capsys):
        code = run("forecast", "--bundle", trained / "bundle.json", "--input",
                   trained / "synth.csv", "--date", "2030-01-01", "--out-dir", trained / "h")
        assert code == 2 and "not in" in capsys.readouterr().err

    def test_evaluate_tables(self, trained, workdir):
        assert run("evaluate", "--config", workdir / "fast.cfg", "--bundle",
                   trained / "bundle.json", "--out-dir", trained / "e") == 0
        rows = read_csv(trained / "e" / "evaluation.csv")
        assert len(rows) == 9 and len(rows[0]) == 7 and rows[-1][0] == "avg"
        for metric in ("mae", "rmse"):
            plot = read_csv(trained / "e" / f"plot_{metric}_per_day.csv")
            assert plot[0] == ["day", "LSTM", "CNN", "MC"] and len(plot) == 8

    def test_evaluate_mw_scales(self, trained, workdir):
        args = ("evaluate", "--config", workdir / "fast.cfg", "--bundle", trained / "bundle.json")
        run(*args, "--out-dir", trained / "n")
        run(*args, "--units", "mw", "--out-dir", trained / "m")
        norm = json.loads((trained / "n" / "evaluation.json").read_text())["reports"]
        mw = json.loads((trained / "m" / "evaluation.json").read_text())["reports"]
        bundle = json.loads((trained / "bundle.json").read_text())["normalization"]
        span = bundle["max"] - bundle["min"]
        for a, b in zip(norm, mw):
            assert b["units"] == "MW"
            assert b["avg"]["rmse"] == pytest.approx(a["avg"]["rmse"] * span, rel=1e-12)

    def test_evaluate_missing_csv(self, trained, workdir):
        code = run("evaluate", "--config", workdir / "fast.cfg", "--bundle",
                   trained / "bundle.json", "--input", workdir / "missing.csv")
        assert code == 2


class TestConfig:
    def test_precedence(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("seed = 3\ngrid = small\nrefit_bases = yes\n")
        cfg = resolve(p, {"seed": 9, "grid": None})
        assert (cfg.seed, cfg.grid, cfg.refit_bases) == (9, "small", True)
        assert resolve(None, {}) == RunConfig()

    @pytest.mark.parametrize("text", ["bogus = 1\n", "seed = x\n", "seed\n",
                                      "refit_bases = maybe\n", "train_fraction = 1.5\n"])
    def test_errors(self, tmp_path, text):
        p = tmp_path / "c.cfg"
        p.write_text(text)
        with pytest.raises(ConfigError):
            resolve(p, {})

    def test_bad_config_exit_code(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("bogus = 1\n")
        assert run("analyze", "--config", p, "--out-dir", tmp_path) == 2

    def test_missing_config(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config_file(tmp_path / "none.cfg")

    def test_unknown_encoding(self, tmp_path):
        assert run("train", "--encoding", "fancy", "--out-dir", tmp_path) == 2


def test_computation_failure_exit_code(monkeypatch, tmp_path, capsys):
    def boom(*a, **k):
        raise Divergence("every meta candidate diverged for day 1")
    monkeypatch.setattr(cli, "fit_ensemble", boom)
    assert run("train", "--out-dir", tmp_path) == 1
    assert "diverged" in capsys.readouterr().err
