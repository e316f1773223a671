"""Sequential layer stacks and their JSON checkpoints."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import Layer, ShapeError, layer_from_config

CHECKPOINT_FORMAT = "chronocast-model"
CHECKPOINT_VERSION = 1


class Divergence(FloatingPointError):
    pass


class Sequential:
    """An ordered stack of layers with its own dropout generator."""

    def __init__(self, layers: list[Layer], seed: int = 0):
        self.layers = list(layers)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        # parameters and gradients live in two flat buffers; layers hold views
        sizes = [p.size for layer in self.layers for p in layer.params.values()]
        self._flat = np.zeros(sum(sizes))
        self._gflat = np.zeros(sum(sizes))
        i = 0
        for layer in self.layers:
            for name, p in list(layer.params.items()):
                view = self._flat[i:i + p.size].reshape(p.shape)
                view[...] = p
                layer.params[name] = view
                layer.grads[name] = self._gflat[i:i + p.size].reshape(p.shape)
                i += p.size

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        rng = self.rng if rng is None else rng
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out, train=train, rng=rng)
        if not np.all(np.isfinite(out)):
            raise Divergence("non-finite activation in forward pass")
        return out

    __call__ = forward

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.concatenate(
            [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        )

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def zero_grad(self) -> None:
        self._gflat.fill(0.0)

    def parameters(self) -> list[np.ndarray]:
        """The flat parameter buffer (a one-element list, updated in place)."""
        return [self._flat]

    def gradients(self) -> list[np.ndarray]:
        return [self._gflat]

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def output_shapes(self, input_shape: tuple) -> list[tuple]:
        shapes, shape = [], tuple(input_shape)
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes

    def get_flat(self) -> np.ndarray:
        return self._flat.copy()

    def set_flat(self, flat: np.ndarray) -> None:
        if np.shape(flat) != self._flat.shape:
            raise ShapeError(f"expected {self._flat.size} parameters, got {np.size(flat)}")
        self._flat[...] = flat

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "layers": [
                {
                    "config": layer.config(),
                    "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                               for k, v in layer.params.items()},
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sequential":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a model checkpoint")
        if d.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        layers = []
        for entry in d["layers"]:
            layer = layer_from_config(entry["config"])
            saved = entry["params"]
            if set(saved) != set(layer.params):
                raise ShapeError(f"{layer.kind}: parameter names {sorted(saved)} do not match")
            for name, arr in layer.params.items():
                shape = tuple(saved[name]["shape"])
                data = np.asarray(saved[name]["data"], dtype=np.float64)
                if shape != arr.shape or data.size != arr.size:
                    raise ShapeError(
                        f"{layer.kind}.{name}: checkpoint shape {shape} != expected {arr.shape}"
                    )
                arr[...] = data.reshape(shape)
            layers.append(layer)
        return cls(layers, seed=d.get("seed", 0))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Sequential":
        return cls.from_dict(json.loads(Path(path).read_text()))
