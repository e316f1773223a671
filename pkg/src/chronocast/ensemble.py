"""LSTM and CNN base forecasters stacked under seven per-day MLP meta-regressors."""

from __future__ import annotations

import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import EncodingConfig, build_feature_frame, named_encoding
from .nn import LSTM, Conv1D, Dense, Divergence, Dropout, GlobalAvgPool1D, Sequential
from .nn.losses import mse_loss
from .nn.population import MemberSpec, train_population
from .nn.training import TrainConfig, train
from .series import (
    HORIZON,
    INPUT_LEN,
    DailySeries,
    NormalizationParams,
    WindowedDataset,
    chronological_split,
    fit_minmax,
    make_windows,
    normalize,
)

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "chronocast-ensemble"
BUNDLE_VERSION = 1


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed from a tuple of integers (master seed first)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class BaseHyper:
    learning_rate: float
    dropout: float
    epochs: int = 80
    batch_size: int = 32


BASE_KINDS = {
    "lstm_base": BaseHyper(learning_rate=1e-4, dropout=0.2),
    "cnn_base": BaseHyper(learning_rate=1e-3, dropout=0.3),
}


def build_base(kind: str, feature_count: int, seed: int = 0,
               horizon: int = HORIZON) -> Sequential:
    if feature_count < 1:
        raise ValueError("feature_count must be >= 1")
    try:
        rate = BASE_KINDS[kind].dropout
    except KeyError:
        raise ValueError(f"unknown base model {kind!r}") from None
    rng = np.random.default_rng(seed)
    if kind == "lstm_base":
        layers = [
            LSTM(feature_count, 64, return_last_state=True, rng=rng),
            Dropout(rate),
            Dense(64, 32, "relu", rng=rng),
            Dropout(rate),
            Dense(32, horizon, "linear", rng=rng),
        ]
    else:
        layers = [
            Conv1D(feature_count, 128, 3, "relu", rng=rng),
            Dropout(rate),
            Conv1D(128, 32, 3, "relu", rng=rng),
            GlobalAvgPool1D(),
            Dense(32, 16, "relu", rng=rng),
            Dropout(rate),
            Dense(16, horizon, "linear", rng=rng),
        ]
    return Sequential(layers, seed=seed)


def train_bases(train_ws: WindowedDataset, seed: int, epochs: int | None = None):
    """Train both bases with their own hyper-parameters.

    Returns ``(lstm, cnn, histories)`` where histories maps kind to the
    per-epoch training loss.
    """
    models, histories = {}, {}
    for k, (kind, hp) in enumerate(BASE_KINDS.items()):
        model_seed = derive_seed(seed, 1, k)
        model = build_base(kind, train_ws.feature_count, seed=model_seed,
                           horizon=train_ws.horizon)
        cfg = TrainConfig(
            epochs=epochs or hp.epochs,
            batch_size=hp.batch_size,
            learning_rate=hp.learning_rate,
            shuffle_seed=derive_seed(seed, 1, k, 1),
        )
        histories[kind] = train(model, train_ws, cfg).history
        models[kind] = model
    return models["lstm_base"], models["cnn_base"], histories


def stacking_predictions(bases, inputs) -> np.ndarray:
    """Eval-mode base forecasts stacked as (N, 2, horizon): LSTM row, CNN row."""
    lstm, cnn = bases
    x = inputs.inputs if hasattr(inputs, "inputs") else np.asarray(inputs, dtype=np.float64)
    return np.stack([lstm.predict(x), cnn.predict(x)], axis=1)


@dataclass(frozen=True)
class MetaCandidate:
    hidden_layers: tuple[int, int, int]
    activation: str
    solver: str
    learning_rate: float
    lr_update: str

    def label(self) -> str:
        h = "-".join(map(str, self.hidden_layers))
        return f"{h}/{self.activation}/{self.solver}/{self.learning_rate:g}/{self.lr_update}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_layers"] = list(self.hidden_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetaCandidate":
        return cls(tuple(d["hidden_layers"]), d["activation"], d["solver"],
                   float(d["learning_rate"]), d["lr_update"])


GRID_HIDDEN = ((10, 8, 6), (10, 6, 6), (10, 6, 4), (8, 8, 4), (8, 8, 6),
               (8, 6, 4), (8, 6, 6), (6, 6, 6), (6, 6, 4), (6, 4, 4))
GRID_ACTIVATION = ("relu", "tanh")
GRID_SOLVER = ("adam", "sgd")
GRID_LR = (1e-4, 2e-4, 3e-4, 4e-4, 5e-4)
GRID_LR_UPDATE = ("adaptive", "constant")


def paper_grid() -> list[MetaCandidate]:
    """All 400 combinations, hidden layers varying slowest."""
    return [MetaCandidate(*combo) for combo in itertools.product(
        GRID_HIDDEN, GRID_ACTIVATION, GRID_SOLVER, GRID_LR, GRID_LR_UPDATE)]


def small_grid() -> list[MetaCandidate]:
    """8-candidate subset of the full grid for desk-scale runs."""
    return [MetaCandidate(*combo) for combo in itertools.product(
        ((10, 8, 6), (8, 6, 4)), GRID_ACTIVATION, ("adam",), (3e-4, 5e-4), ("constant",))]


GRIDS = {"paper": paper_grid, "small": small_grid}


def get_grid(name: str) -> list[MetaCandidate]:
    try:
        return GRIDS[name]()
    except KeyError:
        raise ValueError(f"unknown grid {name!r}; choose from {', '.join(GRIDS)}") from None


@dataclass(frozen=True)
class MetaTrainConfig:
    max_epochs: int = 300
    patience: int = 20
    min_delta: float = 1e-6
    batch_size: int | None = 8  # None: full batch


def build_meta(candidate: MetaCandidate, seed: int = 0) -> Sequential:
    rng = np.random.default_rng(seed)
    dims = (2, *candidate.hidden_layers)
    layers = [Dense(i, o, candidate.activation, rng=rng) for i, o in zip(dims, dims[1:])]
    layers.append(Dense(dims[-1], 1, "linear", rng=rng))
    return Sequential(layers, seed=seed)


def fit_candidate(candidate: MetaCandidate, seed: int, meta_train, meta_val,
                  config: MetaTrainConfig = MetaTrainConfig()):
    """Train one candidate on its own; returns (validation MSE, model or None).

    Reference path: the grid search trains candidates in lockstep groups
    instead, which agrees with this to round-off.
    """
    (xtr, ytr), (xval, yval) = meta_train, meta_val
    model = build_meta(candidate, seed=seed)
    cfg = TrainConfig(
        epochs=config.max_epochs,
        batch_size=config.batch_size or len(xtr),
        learning_rate=candidate.learning_rate,
        shuffle_seed=seed,
        optimizer=candidate.solver,
        lr_schedule=candidate.lr_update,
    )
    try:
        train(model, (xtr, ytr), cfg, validation=(xval, yval),
              patience=config.patience, min_delta=config.min_delta)
        score, _ = mse_loss(model.predict(xval), yval)
    except Divergence:
        return np.inf, None
    if not np.isfinite(score):
        return np.inf, None
    return score, model


def _fit_group(args):
    """Train candidates sharing a layer layout together; (scores, flat params)."""
    candidates, seeds, xtr, ytr, xval, yval, mcfg = args
    models = [build_meta(c, seed=s) for c, s in zip(candidates, seeds)]
    specs = [MemberSpec(c.learning_rate, c.solver, c.lr_update, s)
             for c, s in zip(candidates, seeds)]
    scores = train_population(models, specs, (xtr, ytr), (xval, yval),
                              epochs=mcfg.max_epochs,
                              batch_size=mcfg.batch_size or len(xtr),
                              patience=mcfg.patience, min_delta=mcfg.min_delta)
    return scores, [m.get_flat() if np.isfinite(sc) else None
                    for m, sc in zip(models, scores)]


@dataclass
class MetaRegressor:
    day_index: int
    model: Sequential
    chosen: MetaCandidate
    validation_score: float
    scores: list[float] = field(default_factory=list)

    def predict(self, pairs: np.ndarray) -> np.ndarray:
        return self.model.predict(np.asarray(pairs, dtype=np.float64).reshape(-1, 2))[:, 0]


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("CHRONOCAST_THREADS", "1")))
    except ValueError:
        return 1


def grid_search_meta(
    day: int,
    meta_train: tuple[np.ndarray, np.ndarray],
    meta_val: tuple[np.ndarray, np.ndarray],
    grid: list[MetaCandidate],
    seed: int,
    config: MetaTrainConfig = MetaTrainConfig(),
    workers: int | None = None,
) -> MetaRegressor:
    """Exhaustive search for the day-``day`` meta-regressor.

    ``meta_train``/``meta_val`` are ``(pairs (n, 2), targets (n,))``. Each
    candidate trains from its own seed ``derive_seed(seed, 2, day, index)``,
    so parallel and serial runs pick the same winner. The lowest validation
    MSE wins; ties keep the earlier grid entry.
    """
    if not grid:
        raise ValueError("empty hyper-parameter grid")
    xtr, ytr = (np.asarray(a, dtype=np.float64) for a in meta_train)
    xval, yval = (np.asarray(a, dtype=np.float64) for a in meta_val)
    if len(xtr) == 0 or len(xval) == 0:
        raise ValueError("meta train and validation sets must be nonempty")
    ytr, yval = ytr.reshape(-1, 1), yval.reshape(-1, 1)
    seeds = [derive_seed(seed, 2, day, i) for i in range(len(grid))]
    groups: dict[tuple, list[int]] = {}
    for i, c in enumerate(grid):
        groups.setdefault((c.hidden_layers, c.activation), []).append(i)
    members = list(groups.values())
    jobs = [([grid[i] for i in idx], [seeds[i] for i in idx], xtr, ytr, xval, yval, config)
            for idx in members]
    workers = workers or max_workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_group, jobs))
    else:
        results = [_fit_group(job) for job in jobs]

    scores = [np.inf] * len(grid)
    flats = [None] * len(grid)
    for idx, (sc, fl) in zip(members, results):
        for i, s_, f in zip(idx, sc, fl):
            scores[i], flats[i] = float(s_), f
    best = None
    for i, score in enumerate(scores):
        if np.isfinite(score) and (best is None or score < scores[best]):
            best = i
    if best is None:
        raise Divergence(f"every meta candidate diverged for day {day}")
    model = build_meta(grid[best], seed=seeds[best])
    model.set_flat(flats[best])
    return MetaRegressor(day, model, grid[best], scores[best], scores)


@dataclass
class EnsembleModel:
    lstm: Sequential
    cnn: Sequential
    metas: list[MetaRegressor]
    norm: NormalizationParams
    encoding: EncodingConfig
    seed: int = 0
    input_len: int = INPUT_LEN
    horizon: int = HORIZON
    train_fraction: float = 0.8

    def _check_inputs(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        expected = (self.input_len, self.encoding.feature_count)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ValueError(f"window must be shaped {expected}, got {x.shape[-2:]}")
        if len(self.metas) != self.horizon:
            raise ValueError(f"ensemble has {len(self.metas)} meta-regressors, "
                             f"needs {self.horizon}")
        return x

    def base_predictions(self, inputs) -> np.ndarray:
        return stacking_predictions((self.lstm, self.cnn), self._check_inputs(inputs))

    def fuse(self, stacked: np.ndarray) -> np.ndarray:
        """Apply meta ``d`` to the (lstm[d], cnn[d]) pair of every row."""
        stacked = np.asarray(stacked, dtype=np.float64)
        out = np.empty((len(stacked), self.horizon))
        for meta in self.metas:
            d = meta.day_index - 1
            out[:, d] = meta.predict(stacked[:, :, d])
        return out

    def predict_batch(self, inputs) -> np.ndarray:
        return self.fuse(self.base_predictions(inputs))

    def predict(self, window, denormalize: bool = False):
        """7-day forecast for one window; with ``denormalize`` also in MW."""
        norm_pred = self.predict_batch(window)[0]
        if denormalize:
            return norm_pred, norm_pred * self.norm.span + self.norm.min
        return norm_pred

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "seed": self.seed,
            "input_len": self.input_len,
            "horizon": self.horizon,
            "train_fraction": self.train_fraction,
            "normalization": {"min": self.norm.min, "max": self.norm.max},
            "encoding": self.encoding.to_dict(),
            "bases": {"lstm_base": self.lstm.to_dict(), "cnn_base": self.cnn.to_dict()},
            "metas": [
                {"day": m.day_index, "candidate": m.chosen.to_dict(),
                 "validation_mse": m.validation_score, "model": m.model.to_dict()}
                for m in self.metas
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        if d.get("format") != BUNDLE_FORMAT:
            raise ValueError("not an ensemble bundle")
        if d.get("version") != BUNDLE_VERSION:
            raise ValueError(f"unsupported bundle version {d.get('version')}")
        encoding = EncodingConfig.from_dict(d["encoding"])
        lstm = Sequential.from_dict(d["bases"]["lstm_base"])
        cnn = Sequential.from_dict(d["bases"]["cnn_base"])
        width = encoding.feature_count
        for name, m in (("lstm_base", lstm), ("cnn_base", cnn)):
            if m.layers[0].params["W"].shape[0] % width:
                raise ValueError(f"{name} input width does not match the encoding")
            m.output_shapes((d["input_len"], width))
        metas = []
        for entry in d["metas"]:
            cand = MetaCandidate.from_dict(entry["candidate"])
            model = Sequential.from_dict(entry["model"])
            if model.output_shapes((2,))[-1] != (1,):
                raise ValueError("meta-regressor must map 2 inputs to 1 output")
            metas.append(MetaRegressor(entry["day"], model, cand, entry["validation_mse"]))
        norm = NormalizationParams(d["normalization"]["min"], d["normalization"]["max"])
        return cls(lstm, cnn, metas, norm, encoding, d["seed"], d["input_len"], d["horizon"],
                   d.get("train_fraction", 0.8))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "EnsembleModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 42
    encoding: str | EncodingConfig = "paper"
    train_fraction: float = 0.8
    input_len: int = INPUT_LEN
    horizon: int = HORIZON
    meta_every: int = 4
    meta_block: int = 28
    meta_val_fraction: float = 0.2
    grid: str = "paper"
    base_epochs: int | None = None  # None: the per-base default (80)
    meta: MetaTrainConfig = MetaTrainConfig()
    refit_bases: bool = False

    def encoding_config(self) -> EncodingConfig:
        if isinstance(self.encoding, EncodingConfig):
            return self.encoding
        return named_encoding(self.encoding)


@dataclass
class FittedPipeline:
    model: EnsembleModel
    train_windows: WindowedDataset
    test_windows: WindowedDataset
    base_windows: WindowedDataset
    meta_train_windows: WindowedDataset
    meta_val_windows: WindowedDataset
    n_train_days: int
    log: dict


def prepare_windows(series: DailySeries, config: PipelineConfig):
    """Split, scale with train-only extrema, encode and window a raw series.

    Test windows are those whose whole target lies after the split point;
    their input history may reach back into the training days.
    """
    train_days, _ = chronological_split(series, config.train_fraction,
                                        min_len=config.horizon)
    norm = fit_minmax(train_days)
    frame = build_feature_frame(normalize(series, norm), config.encoding_config())
    cut = len(train_days)
    train_ws = make_windows(frame, config.input_len, config.horizon, target_to=cut)
    test_ws = make_windows(frame, config.input_len, config.horizon, target_from=cut)
    return norm, frame, train_ws, test_ws


def split_for_stacking(train_ws: WindowedDataset, meta_every: int = 4,
                       block: int = 28, val_fraction: float = 0.2):
    """Interleaved base/meta split of the training windows.

    Windows are cut into consecutive blocks of ``block``; every
    ``meta_every``-th block is held out for the meta-regressors, the rest
    train the bases. After every base/meta boundary the first
    ``horizon - 1`` windows of the following block are discarded, so no
    held-out target day is ever a base training target. The last
    ``val_fraction`` of each meta block forms the grid-search validation
    set. Returns (base, meta_train, meta_val) index-ordered datasets.
    """
    n = len(train_ws)
    purge = train_ws.horizon - 1
    if meta_every < 2 or block <= purge + 1:
        raise ValueError("need meta_every >= 2 and block > horizon")
    base_idx, tr_idx, val_idx = [], [], []
    for j, start in enumerate(range(0, n, block)):
        is_meta = j % meta_every == meta_every - 1
        idx = list(range(start, min(start + block, n)))
        prev_is_meta = j > 0 and (j - 1) % meta_every == meta_every - 1
        if j > 0 and is_meta != prev_is_meta:
            idx = idx[purge:]
        if not idx:
            continue
        if is_meta:
            n_val = max(1, int(np.floor(len(idx) * val_fraction)))
            if len(idx) - n_val < 1:
                continue
            tr_idx += idx[:-n_val]
            val_idx += idx[-n_val:]
        else:
            base_idx += idx
    if not base_idx or not tr_idx:
        raise ValueError(f"{n} training windows are too few to split for stacking")
    return (train_ws.subset(np.array(base_idx)), train_ws.subset(np.array(tr_idx)),
            train_ws.subset(np.array(val_idx)))


def fit_ensemble(series: DailySeries, config: PipelineConfig = PipelineConfig(),
                 workers: int | None = None) -> FittedPipeline:
    """Run the whole training pipeline on a raw series."""
    t0 = time.perf_counter()
    norm, frame, train_ws, test_ws = prepare_windows(series, config)
    base_ws, meta_tr, meta_val = split_for_stacking(
        train_ws, config.meta_every, config.meta_block, config.meta_val_fraction)
    lstm, cnn, histories = train_bases(base_ws, config.seed, config.base_epochs)
    t_bases = time.perf_counter()

    stacked_tr = stacking_predictions((lstm, cnn), meta_tr)
    stacked_val = stacking_predictions((lstm, cnn), meta_val)
    grid = get_grid(config.grid)
    metas = []
    for d in range(config.horizon):
        meta = grid_search_meta(
            d + 1,
            (stacked_tr[:, :, d], meta_tr.targets[:, d]),
            (stacked_val[:, :, d], meta_val.targets[:, d]),
            grid, config.seed, config.meta, workers,
        )
        log.info("day %d: %s (val MSE %.6g)", d + 1, meta.chosen.label(),
                 meta.validation_score)
        metas.append(meta)
    t_metas = time.perf_counter()

    if config.refit_bases:
        lstm, cnn, histories = train_bases(train_ws, config.seed, config.base_epochs)

    model = EnsembleModel(lstm, cnn, metas, norm, frame.config, config.seed,
                          config.input_len, config.horizon, config.train_fraction)
    run_log = {
        "seed": config.seed,
        "encoding": frame.config.name,
        "grid": config.grid,
        "grid_size": len(grid),
        "windows": {"base": len(base_ws), "meta_train": len(meta_tr),
                    "meta_val": len(meta_val), "test": len(test_ws)},
        "base_loss_history": histories,
        "meta": [{"day": m.day_index, "candidate": m.chosen.to_dict(),
                  "label": m.chosen.label(), "validation_mse": m.validation_score}
                 for m in metas],
        "timings_s": {"bases": t_bases - t0, "metas": t_metas - t_bases},
    }
    return FittedPipeline(model, train_ws, test_ws, base_ws, meta_tr, meta_val,
                          len(train_ws) + config.input_len + config.horizon - 1, run_log)
