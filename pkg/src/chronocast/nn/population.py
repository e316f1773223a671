"""Lockstep training of many small dense networks with identical shapes.

A grid search over MLP hyper-parameters trains hundreds of tiny networks
whose cost is dominated by per-call Python overhead. Here K networks that
share a layer layout are stacked along a leading axis and advanced together,
each with its own initial weights, shuffle stream, learning rate, optimizer
and schedule. Per member the arithmetic is the same as running
:func:`~chronocast.nn.training.train` with validation and early stopping on
that member alone; tests check the two agree to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Dense, ShapeError, _activate, _activation_grad
from .model import Sequential
from .optim import ADAPTIVE_FACTOR, ADAPTIVE_PATIENCE, ADAPTIVE_TOL


@dataclass(frozen=True)
class MemberSpec:
    """Training settings for one population member."""

    learning_rate: float
    optimizer: str = "adam"  # adam | sgd
    lr_schedule: str = "constant"  # constant | adaptive (sgd only)
    shuffle_seed: int = 0


def _layout(model: Sequential) -> list[tuple[int, int, str]]:
    out = []
    for layer in model.layers:
        if not isinstance(layer, Dense):
            raise ShapeError("population training supports dense-only stacks")
        out.append((layer.in_dim, layer.out_dim, layer.activation))
    return out


def train_population(
    models: list[Sequential],
    specs: list[MemberSpec],
    data: tuple[np.ndarray, np.ndarray],
    validation: tuple[np.ndarray, np.ndarray],
    epochs: int,
    batch_size: int,
    patience: int,
    min_delta: float = 1e-6,
) -> list[float]:
    """Train ``models`` in place; returns each member's best validation MSE.

    Members whose activations, gradients or losses turn non-finite are
    frozen and scored ``inf`` (their parameters are left unspecified). The
    others end holding the parameters from their best validation epoch.
    """
    if len(models) != len(specs) or not models:
        raise ValueError("need one spec per model and at least one model")
    layout = _layout(models[0])
    if any(_layout(m) != layout for m in models[1:]):
        raise ShapeError("population members must share a layer layout")
    for s in specs:
        if s.optimizer not in ("adam", "sgd") or s.lr_schedule not in ("constant", "adaptive"):
            raise ValueError(f"unsupported member settings {s}")

    x, y = (np.asarray(a, dtype=np.float64) for a in data)
    vx, vy = (np.asarray(a, dtype=np.float64) for a in validation)
    n, K = len(x), len(models)
    W = [np.stack([m.layers[i].params["W"] for m in models]) for i in range(len(layout))]
    b = [np.stack([m.layers[i].params["b"] for m in models]) for i in range(len(layout))]
    params = [p for pair in zip(W, b) for p in pair]
    mom = [np.zeros_like(p) for p in params]
    vel = [np.zeros_like(p) for p in params]

    lr = np.array([s.learning_rate for s in specs])
    is_adam = np.array([s.optimizer == "adam" for s in specs])
    adaptive = np.array([s.optimizer == "sgd" and s.lr_schedule == "adaptive" for s in specs])
    rngs = [np.random.default_rng(s.shuffle_seed) for s in specs]
    sched_best = np.full(K, np.inf)
    sched_stalled = np.zeros(K, dtype=int)

    active = np.ones(K, dtype=bool)
    diverged = np.zeros(K, dtype=bool)
    best_val = np.full(K, np.inf)
    stale = np.zeros(K, dtype=int)
    best = [p.copy() for p in params]
    t = 0
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    def forward(inp):
        acts = [inp]
        pre = []
        for (_, _, act), w, bias in zip(layout, W, b):
            z = np.matmul(acts[-1], w) + bias[:, None, :]
            pre.append(z)
            acts.append(_activate(z, act))
        return pre, acts

    def kill(mask):
        nonlocal active
        mask = mask & active
        if mask.any():
            diverged[mask] = True
            active = active & ~mask
            for p in params:
                p[mask] = 0.0

    with np.errstate(all="ignore"):
        for epoch in range(epochs):
            if not active.any():
                break
            orders = np.stack([rngs[k].permutation(n) if active[k] else np.arange(n)
                               for k in range(K)])
            total = np.zeros(K)
            for start in range(0, n, batch_size):
                idx = orders[:, start:start + batch_size]
                xb, yb = x[idx], y[idx]
                pre, acts = forward(xb)
                diff = acts[-1] - yb
                kill(~np.isfinite(acts[-1]).all(axis=(1, 2)))
                loss = np.mean(diff * diff, axis=(1, 2))
                g = 2.0 * diff / diff[0].size
                grads = []
                for i in reversed(range(len(layout))):
                    d = _activation_grad(pre[i], acts[i + 1], layout[i][2])
                    dz = g if d is None else g * d
                    grads.append(dz.sum(axis=1))
                    grads.append(np.matmul(acts[i].transpose(0, 2, 1), dz))
                    if i:
                        g = np.matmul(dz, W[i].transpose(0, 2, 1))
                grads.reverse()  # W0, b0, W1, b1, ...
                finite = np.ones(K, dtype=bool)
                for gr in grads:
                    finite &= np.isfinite(gr).reshape(K, -1).all(axis=1)
                kill(~finite)

                t += 1
                bc1, bc2 = 1.0 - beta1 ** t, 1.0 - beta2 ** t
                for p, gr, m, v in zip(params, grads, mom, vel):
                    m *= beta1
                    m += (1.0 - beta1) * gr
                    v *= beta2
                    v += (1.0 - beta2) * (gr * gr)
                    col = (K,) + (1,) * (p.ndim - 1)
                    step = np.where(is_adam.reshape(col),
                                    (m / bc1) / (np.sqrt(v / bc2) + eps), gr)
                    p -= np.where(active.reshape(col), lr.reshape(col) * step, 0.0)
                total += loss * idx.shape[1]

            epoch_loss = total / n
            kill(~np.isfinite(epoch_loss))
            for k in np.flatnonzero(adaptive & active):
                if epoch_loss[k] < sched_best[k] - ADAPTIVE_TOL:
                    sched_best[k], sched_stalled[k] = epoch_loss[k], 0
                else:
                    sched_stalled[k] += 1
                    if sched_stalled[k] >= ADAPTIVE_PATIENCE:
                        lr[k] /= ADAPTIVE_FACTOR
                        sched_stalled[k] = 0

            vpred = forward(np.broadcast_to(vx, (K,) + vx.shape))[1][-1]
            vdiff = vpred - vy
            val = np.mean(vdiff * vdiff, axis=(1, 2))
            kill(~np.isfinite(val))
            improved = active & (val < best_val - min_delta)
            if improved.any():
                best_val[improved] = val[improved]
                stale[improved] = 0
                for p, keep in zip(params, best):
                    keep[improved] = p[improved]
            worse = active & ~improved
            stale[worse] += 1
            active &= ~(worse & (stale >= patience))

    for k, m in enumerate(models):
        if not diverged[k]:
            m.set_flat(np.concatenate([p[k].ravel() for p in best]))
    return [float(np.inf) if diverged[k] else float(best_val[k]) for k in range(K)]
