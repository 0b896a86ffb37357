"""Minimal named-parameter containers on top of tensorcore: Linear, MLP, LayerNorm."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from . import tensorcore as tc
from .tensorcore import Tensor


class Module:
    """A container that owns parameters and child modules under dotted names."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def param(self, name: str, values) -> Tensor:
        t = tc.parameter(values, name)
        self._params[name] = t
        return t

    def child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, p in self._params.items():
            out[prefix + name] = p
        for name, c in self._children.items():
            out.update(c.parameters(prefix + name + "."))
        return out

    def load_state(self, state: Mapping[str, np.ndarray], prefix: str = "") -> None:
        """Copy values for every owned parameter from ``state``; missing keys fail."""
        for name, p in self.parameters(prefix).items():
            if name not in state:
                raise KeyError(f"checkpoint missing parameter '{name}'")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.values.shape:
                raise ValueError(f"shape mismatch for '{name}': {arr.shape} vs {p.values.shape}")
            p.values = arr.copy()

    def set_trainable(self, flag: bool) -> None:
        for p in self.parameters().values():
            p.requires_grad = flag

    def zero_all(self) -> None:
        """Test hook: zero every owned parameter."""
        for p in self.parameters().values():
            p.values = np.zeros_like(p.values)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True):
        super().__init__()
        self.w = self.param("w", tc.uniform_init(rng, d_in, (d_in, d_out)))
        self.b = self.param("b", np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = tc.matmul(x, self.w)
        if self.b is not None:
            y = tc.add(y, self.b)
        return y


class MLP(Module):
    """Dense layers with ReLU between them (none after the last)."""

    def __init__(self, rng: np.random.Generator, dims: list[int]):
        super().__init__()
        self.layers = [self.child(f"l{i}", Linear(rng, a, b)) for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i + 1 < len(self.layers):
                x = tc.relu(x)
        return x


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gain = self.param("gain", np.ones(dim))
        self.bias = self.param("bias", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        m = tc.tmean(x, axis=-1, keepdims=True)
        centered = tc.sub(x, m)
        var = tc.tmean(tc.mul(centered, centered), axis=-1, keepdims=True)
        normed = tc.div(centered, tc.sqrt(tc.add(var, self.eps)))
        return tc.add(tc.mul(normed, self.gain), self.bias)
