"""Seeded mini-batch training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import mse_loss
from .model import Divergence, Sequential
from .optim import NonFiniteGradient, make_optimizer


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 32
    learning_rate: float = 1e-3
    shuffle_seed: int = 0
    loss: str = "mse"
    optimizer: str = "adam"
    lr_schedule: str = "constant"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss != "mse":
            raise ValueError(f"unsupported loss {self.loss!r}")


@dataclass
class TrainResult:
    history: list[float]
    val_history: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    final_learning_rate: float | None = None


def _as_arrays(data):
    if hasattr(data, "inputs"):
        return data.inputs, data.targets
    x, y = data
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)


def train(
    model: Sequential,
    data,
    config: TrainConfig,
    validation=None,
    patience: int | None = None,
    min_delta: float = 1e-6,
) -> TrainResult:
    """Train ``model`` in place on a WindowedDataset or an ``(x, y)`` pair.

    Each epoch reshuffles sample order from a generator seeded with
    ``config.shuffle_seed`` and records the size-weighted mean batch loss.
    If ``validation`` is given, its eval-mode MSE is tracked; with
    ``patience`` set, training stops once validation MSE has not improved by
    ``min_delta`` for that many epochs and the best parameters are restored.
    """
    x, y = _as_arrays(data)
    n = len(x)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.shuffle_seed)
    opt = make_optimizer(config.optimizer, config.learning_rate, config.lr_schedule)
    params = model.parameters()
    result = TrainResult(history=[])
    if validation is not None:
        vx, vy = _as_arrays(validation)
        best_val, best_flat, stale = np.inf, None, 0

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        try:
            # overflow is caught below as divergence, not reported as warnings
            with np.errstate(over="ignore", invalid="ignore"):
                for start in range(0, n, config.batch_size):
                    idx = order[start:start + config.batch_size]
                    model.zero_grad()
                    pred = model.forward(x[idx], train=True)
                    loss, grad = mse_loss(pred, y[idx])
                    model.backward(grad)
                    opt.step(params, model.gradients())
                    total += loss * len(idx)
        except (Divergence, NonFiniteGradient, FloatingPointError) as exc:
            raise Divergence(f"training diverged at epoch {epoch}: {exc}") from exc
        epoch_loss = total / n
        if not np.isfinite(epoch_loss):
            raise Divergence(f"training diverged at epoch {epoch}: loss {epoch_loss}")
        result.history.append(epoch_loss)
        opt.end_epoch(epoch_loss)

        if validation is not None:
            try:
                val, _ = mse_loss(model.predict(vx), vy)
            except Divergence as exc:
                raise Divergence(f"training diverged at epoch {epoch}: {exc}") from exc
            result.val_history.append(val)
            if val < best_val - min_delta:
                best_val, best_flat, stale = val, model.get_flat(), 0
                result.best_epoch = epoch
            else:
                stale += 1
                if patience is not None and stale >= patience:
                    break

    if validation is not None and patience is not None and best_flat is not None:
        model.set_flat(best_flat)
    result.final_learning_rate = opt.learning_rate
    return result
