"""Adam and SGD over lists of parameter arrays, updated in place."""

from __future__ import annotations

import numpy as np

ADAPTIVE_FACTOR = 5.0
ADAPTIVE_TOL = 1e-4
ADAPTIVE_PATIENCE = 2


class NonFiniteGradient(FloatingPointError):
    pass


def _check(grads) -> None:
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient")


class Adam:
    kind = "adam"

    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        _check(grads)
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def end_epoch(self, loss: float) -> None:
        pass


class SGD:
    """Plain gradient descent.

    With ``schedule="adaptive"`` the learning rate is divided by 5 each time
    the epoch loss has failed to improve on the best seen by at least 1e-4
    for two consecutive epochs.
    """

    kind = "sgd"

    def __init__(self, learning_rate: float = 1e-2, schedule: str = "constant"):
        if schedule not in ("constant", "adaptive"):
            raise ValueError(f"unknown learning-rate schedule {schedule!r}")
        self.learning_rate = learning_rate
        self.schedule = schedule
        self.t = 0
        self._best = np.inf
        self._stalled = 0

    def step(self, params, grads) -> None:
        _check(grads)
        self.t += 1
        for p, g in zip(params, grads):
            p -= self.learning_rate * g

    def end_epoch(self, loss: float) -> None:
        if self.schedule != "adaptive":
            return
        if loss < self._best - ADAPTIVE_TOL:
            self._best = loss
            self._stalled = 0
            return
        self._stalled += 1
        if self._stalled >= ADAPTIVE_PATIENCE:
            self.learning_rate /= ADAPTIVE_FACTOR
            self._stalled = 0


def make_optimizer(kind: str, learning_rate: float, schedule: str = "constant"):
    if kind == "adam":
        return Adam(learning_rate)
    if kind == "sgd":
        return SGD(learning_rate, schedule)
    raise ValueError(f"unknown optimizer {kind!r}")
