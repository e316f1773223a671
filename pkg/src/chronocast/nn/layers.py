"""Differentiable layers with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``self.grads`` on ``backward``.
Arrays are float64 throughout; sequences are laid out (batch, time, channels).
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("linear", "relu", "tanh")


class ShapeError(ValueError):
    pass


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray | None:
    # None stands for the identity Jacobian
    if kind == "linear":
        return None
    if kind == "relu":
        return (z > 0).astype(np.float64)
    return 1.0 - a * a


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple) -> tuple:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError

    def zero_grad(self) -> None:
        if set(self.grads) != set(self.params):
            self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        for g in self.grads.values():
            g.fill(0.0)

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind}.backward called without a cached forward pass")
        return self._cache

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int, activation: str = "linear", rng=None):
        super().__init__()
        if in_dim < 1 or out_dim < 1:
            raise ShapeError("dense dimensions must be positive")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim, self.out_dim, self.activation = in_dim, out_dim, activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = {
            "W": glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim),
            "b": np.zeros(out_dim),
        }
        self.zero_grad()

    def forward(self, x, train=False, rng=None):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"dense expects (batch, {self.in_dim}), got {x.shape}")
        z = x @ self.params["W"] + self.params["b"]
        a = _activate(z, self.activation)
        self._cache = (x, z, a)
        return a

    def backward(self, dout):
        x, z, a = self._need_cache()
        d = _activation_grad(z, a, self.activation)
        dz = dout if d is None else dout * d
        self.grads["W"] += x.T @ dz
        self.grads["b"] += dz.sum(axis=0)
        return dz @ self.params["W"].T

    def output_shape(self, input_shape):
        if input_shape != (self.in_dim,):
            raise ShapeError(f"dense expects ({self.in_dim},), got {input_shape}")
        return (self.out_dim,)

    def config(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim,
                "activation": self.activation}


class LSTM(Layer):
    """Standard LSTM cell unrolled over time, trained by full BPTT.

    Gate blocks in the fused kernels are ordered input, forget, output,
    candidate. With ``return_last_state`` only the final hidden state is
    emitted, giving (batch, hidden); otherwise (batch, time, hidden).
    """

    kind = "lstm"

    def __init__(self, input_dim: int, hidden_units: int, return_last_state: bool = True,
                 rng=None):
        super().__init__()
        if input_dim < 1 or hidden_units < 1:
            raise ShapeError("lstm dimensions must be positive")
        self.input_dim, self.hidden_units = input_dim, hidden_units
        self.return_last_state = return_last_state
        rng = rng if rng is not None else np.random.default_rng(0)
        H = hidden_units
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget-gate bias
        self.params = {
            "W": glorot_uniform(rng, (input_dim, 4 * H), input_dim, 4 * H),
            "U": glorot_uniform(rng, (H, 4 * H), H, 4 * H),
            "b": b,
        }
        self.zero_grad()

    def forward(self, x, train=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeError(f"lstm expects (batch, time, {self.input_dim}), got {x.shape}")
        B, T, _ = x.shape
        H = self.hidden_units
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        xz = (x @ W + b).transpose(1, 0, 2)
        hs = np.zeros((T + 1, B, H))
        cs = np.zeros((T + 1, B, H))
        gates = np.empty((T, B, 4 * H))
        tanh_c = np.empty((T, B, H))
        for t in range(T):
            z = xz[t] + hs[t] @ U
            g = gates[t]
            # sigmoid(z) = (1 + tanh(z / 2)) / 2 on the i, f, o blocks
            np.tanh(0.5 * z[:, :3 * H], out=g[:, :3 * H])
            g[:, :3 * H] *= 0.5
            g[:, :3 * H] += 0.5
            np.tanh(z[:, 3 * H:], out=g[:, 3 * H:])
            c = cs[t + 1]
            np.multiply(g[:, H:2 * H], cs[t], out=c)
            c += g[:, :H] * g[:, 3 * H:]
            np.tanh(c, out=tanh_c[t])
            np.multiply(g[:, 2 * H:3 * H], tanh_c[t], out=hs[t + 1])
        self._cache = (x, hs, cs, gates, tanh_c)
        if self.return_last_state:
            return hs[T].copy()
        return hs[1:].transpose(1, 0, 2).copy()

    def backward(self, dout):
        x, hs, cs, gates, tanh_c = self._need_cache()
        B, T, D = x.shape
        H = self.hidden_units
        U = self.params["U"]
        i, f = gates[..., :H], gates[..., H:2 * H]
        o, cand = gates[..., 2 * H:3 * H], gates[..., 3 * H:]
        # local derivative factors for every step, so the recurrence below
        # is only the dc/dh chain; blocks 0, 1, 3 scale dc and block 2 dh
        factors = np.empty((T, B, 4, H))
        factors[:, :, 0] = cand * i * (1.0 - i)
        factors[:, :, 1] = cs[:-1] * f * (1.0 - f)
        factors[:, :, 2] = tanh_c * o * (1.0 - o)
        factors[:, :, 3] = i * (1.0 - cand * cand)
        o_dtanh = o * (1.0 - tanh_c * tanh_c)

        if self.return_last_state:
            dh_seq = None
            dh = dout.copy()
        else:
            dh_seq = dout.transpose(1, 0, 2)
            dh = np.zeros((B, H))
        dc = np.zeros((B, H))
        dz_all = np.empty((T, B, 4, H))
        for t in range(T - 1, -1, -1):
            if dh_seq is not None:
                dh = dh + dh_seq[t]
            dc += dh * o_dtanh[t]
            dz = dz_all[t]
            np.multiply(factors[t, :, :2], dc[:, None, :], out=dz[:, :2])
            np.multiply(factors[t, :, 2], dh, out=dz[:, 2])
            np.multiply(factors[t, :, 3], dc, out=dz[:, 3])
            dh = dz.reshape(B, 4 * H) @ U.T
            dc *= f[t]
        dz_flat = dz_all.reshape(T * B, 4 * H)
        self.grads["U"] += hs[:-1].reshape(T * B, H).T @ dz_flat
        self.grads["W"] += x.transpose(1, 0, 2).reshape(T * B, D).T @ dz_flat
        self.grads["b"] += dz_flat.sum(axis=0)
        return (dz_flat @ self.params["W"].T).reshape(T, B, D).transpose(1, 0, 2)

    def output_shape(self, input_shape):
        if len(input_shape) != 2 or input_shape[1] != self.input_dim:
            raise ShapeError(f"lstm expects (time, {self.input_dim}), got {input_shape}")
        if self.return_last_state:
            return (self.hidden_units,)
        return (input_shape[0], self.hidden_units)

    def config(self):
        return {"kind": self.kind, "input_dim": self.input_dim,
                "hidden_units": self.hidden_units,
                "return_last_state": self.return_last_state}


class Conv1D(Layer):
    """Valid (unpadded), stride-1 convolution along the time axis."""

    kind = "conv1d"

    def __init__(self, in_channels: int, filters: int, kernel_size: int = 3,
                 activation: str = "relu", rng=None):
        super().__init__()
        if min(in_channels, filters, kernel_size) < 1:
            raise ShapeError("conv1d dimensions must be positive")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.in_channels, self.filters = in_channels, filters
        self.kernel_size, self.activation = kernel_size, activation
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in, fan_out = kernel_size * in_channels, kernel_size * filters
        self.params = {
            "W": glorot_uniform(rng, (kernel_size * in_channels, filters), fan_in, fan_out),
            "b": np.zeros(filters),
        }
        self.zero_grad()

    def forward(self, x, train=False, rng=None):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ShapeError(f"conv1d expects (batch, time, {self.in_channels}), got {x.shape}")
        B, T, C = x.shape
        k = self.kernel_size
        if T < k:
            raise ShapeError(f"sequence length {T} shorter than kernel {k}")
        Tp = T - k + 1
        # im2col, tap-major: cols[b, t, j*C + c] = x[b, t + j, c]
        cols = np.concatenate([x[:, j:j + Tp] for j in range(k)], axis=2)
        z = (cols.reshape(-1, k * C) @ self.params["W"]).reshape(B, Tp, self.filters)
        z += self.params["b"]
        a = _activate(z, self.activation)
        self._cache = (x.shape, cols, z, a)
        return a

    def backward(self, dout):
        (B, T, C), cols, z, a = self._need_cache()
        k, F = self.kernel_size, self.filters
        d = _activation_grad(z, a, self.activation)
        dz = dout if d is None else dout * d
        Tp = T - k + 1
        self.grads["W"] += cols.reshape(-1, k * C).T @ dz.reshape(-1, F)
        self.grads["b"] += dz.sum(axis=(0, 1))
        dcols = (dz.reshape(-1, F) @ self.params["W"].T).reshape(B, Tp, k, C)
        dx = np.zeros((B, T, C))
        for j in range(k):
            dx[:, j:j + Tp] += dcols[:, :, j]
        return dx

    def output_shape(self, input_shape):
        if len(input_shape) != 2 or input_shape[1] != self.in_channels:
            raise ShapeError(f"conv1d expects (time, {self.in_channels}), got {input_shape}")
        if input_shape[0] < self.kernel_size:
            raise ShapeError("sequence shorter than kernel")
        return (input_shape[0] - self.kernel_size + 1, self.filters)

    def config(self):
        return {"kind": self.kind, "in_channels": self.in_channels, "filters": self.filters,
                "kernel_size": self.kernel_size, "activation": self.activation}


class GlobalAvgPool1D(Layer):
    kind = "global_avg_pool"

    def forward(self, x, train=False, rng=None):
        if x.ndim != 3:
            raise ShapeError(f"global pooling expects (batch, time, channels), got {x.shape}")
        self._cache = x.shape
        return x.mean(axis=1)

    def backward(self, dout):
        B, T, C = self._need_cache()
        return np.broadcast_to(dout[:, None, :] / T, (B, T, C)).copy()

    def output_shape(self, input_shape):
        if len(input_shape) != 2:
            raise ShapeError("global pooling expects (time, channels)")
        return (input_shape[1],)

    def config(self):
        return {"kind": self.kind}


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time,
    so evaluation is a plain pass-through."""

    kind = "dropout"

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._cache = None
            self._passthrough = True
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs a random generator")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        self._cache = mask
        self._passthrough = False
        return x * mask

    def backward(self, dout):
        if getattr(self, "_passthrough", False):
            return dout
        return dout * self._need_cache()

    def output_shape(self, input_shape):
        return input_shape

    def config(self):
        return {"kind": self.kind, "rate": self.rate}


LAYER_KINDS = {cls.kind: cls for cls in (Dense, LSTM, Conv1D, GlobalAvgPool1D, Dropout)}


def layer_from_config(cfg: dict) -> Layer:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    try:
        cls = LAYER_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown layer kind {kind!r}") from None
    return cls(**cfg)
