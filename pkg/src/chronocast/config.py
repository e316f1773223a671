"""Run configuration: defaults, flat ``key = value`` files, CLI overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .series import HORIZON, INPUT_LEN
from .synth import BENCHMARK_DAYS, BENCHMARK_SEED


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    input_csv: str | None = None  # None: use the synthetic generator
    synth_days: int = BENCHMARK_DAYS
    synth_profile: str = "seasonal"
    seed: int = BENCHMARK_SEED
    encoding: str = "paper"  # named variant or path to an encoding file
    train_fraction: float = 0.8
    input_len: int = INPUT_LEN
    horizon: int = HORIZON
    out_dir: str = "out"
    units: str = "normalized"
    fill_gaps: str | None = None
    grid: str = "paper"
    base_epochs: int | None = None
    meta_batch_size: int | None = 8
    refit_bases: bool = False


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(name: str, raw: str):
    default = RunConfig.__dataclass_fields__[name].default
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        try:
            return _BOOL[raw.lower()]
        except KeyError:
            raise ConfigError(f"{name}: expected a boolean, got {raw!r}") from None
    kind = {"seed": int, "synth_days": int, "input_len": int, "horizon": int,
            "base_epochs": int, "meta_batch_size": int, "train_fraction": float}.get(name, str)
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def load_config_file(path: str | Path) -> dict:
    known = {f.name for f in fields(RunConfig)}
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def resolve(config_path: str | None, overrides: dict) -> RunConfig:
    """Defaults, then the config file, then non-None ``overrides``."""
    cfg = RunConfig()
    if config_path:
        cfg = replace(cfg, **load_config_file(config_path))
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if not 0 < cfg.train_fraction < 1:
        raise ConfigError("train_fraction must lie strictly between 0 and 1")
    if cfg.units.lower() not in ("normalized", "mw"):
        raise ConfigError(f"units must be 'normalized' or 'mw', got {cfg.units!r}")
    return cfg
