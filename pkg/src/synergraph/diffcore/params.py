"""Named parameter collections and seeded initialisation."""
from __future__ import annotations

import zlib

import numpy as np

from .tensor import Tensor


def rng_stream(seed, name):
    """Independent generator for a named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def glorot(rng, shape):
    fan_in, fan_out = shape[0], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParamStore:
    """Mapping of unique names to trainable tensors plus a global step counter."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.step = 0

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(value, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def __iter__(self):
        return iter(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(n, self._params[n]) for n in self.names()]

    def zero_grad(self):
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def arrays(self):
        return {n: t.data.copy() for n, t in self.items()}

    def load_arrays(self, arrays):
        missing = set(self._params) - set(arrays)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, arr in arrays.items():
            if name not in self._params:
                raise KeyError(f"unexpected parameter {name!r}")
            if arr.shape != self._params[name].shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {self._params[name].shape}")
            self._params[name].data = np.array(arr, dtype=np.float64)

    def num_values(self):
        return int(sum(t.size for t in self._params.values()))

    def global_grad_norm(self):
        total = 0.0
        for _, t in self.items():
            if t.grad is not None:
                total += float(np.sum(t.grad * t.grad))
        return float(np.sqrt(total))


class Module:
    """Helper for components that register parameters under a name prefix."""

    def __init__(self, store: ParamStore, prefix: str, seed: int):
        self.store = store
        self.prefix = prefix
        self.seed = seed

    def param(self, name, shape, init="glorot", scale=1.0):
        full = f"{self.prefix}.{name}"
        rng = rng_stream(self.seed, full)
        if init == "glorot":
            value = glorot(rng, shape) * scale
        elif init == "zeros":
            value = np.zeros(shape)
        elif init == "ones":
            value = np.ones(shape)
        elif init == "normal":
            value = rng.normal(0.0, scale, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        return self.store.add(full, value)


class Linear(Module):
    def __init__(self, store, prefix, seed, d_in, d_out, bias=True, init="glorot"):
        super().__init__(store, prefix, seed)
        self.d_in, self.d_out = d_in, d_out
        self.W = self.param("W", (d_in, d_out), init=init)
        self.b = self.param("b", (d_out,), init="zeros") if bias else None

    def __call__(self, x):
        y = x @ self.W
        return y + self.b if self.b is not None else y
