"""Dense float64 tensors with reverse-mode autodiff, Adam, and checkpoint IO.

Tensors form a define-by-run DAG: every operator returns a new node that
remembers its parents and a vector-Jacobian closure. ``backward`` walks the
DAG once in reverse topological order and accumulates gradients into every
node flagged ``requires_grad``. All values are float64; every node is
checked for NaN/Inf at construction so numerical blow-ups fail loudly at
the op that produced them.
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "TensorError",
    "NumericError",
    "parameter",
    "constant",
    "backward",
    "zero_grads",
    "add",
    "sub",
    "neg",
    "mul",
    "div",
    "matmul",
    "concat",
    "reshape",
    "transpose",
    "take",
    "take_along",
    "narrow",
    "relu",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "softplus",
    "sin",
    "cos",
    "softmax",
    "tsum",
    "tmean",
    "tmax",
    "squared_error",
    "AdamState",
    "adam_init",
    "adam_step",
    "plateau_lr",
    "make_rng",
    "uniform_init",
    "CHECKPOINT_MAGIC",
    "save_checkpoint",
    "load_checkpoint",
]


class TensorError(ValueError):
    """Shape or construction contract violation."""


class NumericError(ArithmeticError):
    """A NaN or Inf appeared in a tensor value."""


_node_ids = itertools.count()


class Tensor:
    """One node of the computation DAG.

    Leaves hold data (parameters when ``requires_grad``); interior nodes
    additionally carry the op name, parent references, and a VJP closure.
    """

    __slots__ = ("values", "requires_grad", "grad", "name", "op", "parents", "_vjp", "node_id")

    def __init__(self, values, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in tensor {name or '<leaf>'}")
        self.values = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], None] | None = None
        self.node_id = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values.reshape(()))

    def __repr__(self) -> str:
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.shape}, grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(values, name: str) -> Tensor:
    """A trainable leaf."""
    return Tensor(values, requires_grad=True, name=name)


def constant(values, name: str | None = None) -> Tensor:
    return Tensor(values, requires_grad=False, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make_node(values: np.ndarray, op: str, parents: Sequence[Tensor], vjp) -> Tensor:
    if not np.all(np.isfinite(values)):
        ids = ", ".join(str(p.node_id) for p in parents)
        raise NumericError(f"non-finite result of op '{op}' (node parents: {ids})")
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out.name = None
    out.node_id = next(_node_ids)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out.parents = tuple(parents)
        out._vjp = vjp
    else:
        # constant subgraph: keep no history
        out.requires_grad = False
        out.op = op
        out.parents = ()
        out._vjp = None
    return out


def _accum(node: Tensor, g: np.ndarray) -> None:
    if not node.requires_grad:
        return
    if node.grad is None:
        node.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        node.grad = node.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values + b.values

    def vjp(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make_node(out, "add", (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values - b.values

    def vjp(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make_node(out, "sub", (a, b), vjp)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        _accum(a, -g)

    return _make_node(-a.values, "neg", (a,), vjp)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values * b.values

    def vjp(g):
        _accum(a, _unbroadcast(g * b.values, a.shape))
        _accum(b, _unbroadcast(g * a.values, b.shape))

    return _make_node(out, "mul", (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    with np.errstate(all="ignore"):
        out = a.values / b.values

    def vjp(g):
        _accum(a, _unbroadcast(g / b.values, a.shape))
        _accum(b, _unbroadcast(-g * a.values / (b.values * b.values), b.shape))

    return _make_node(out, "div", (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 1 or b.ndim < 2:
        raise TensorError(f"matmul needs ndim>=2 operands, got {a.shape} @ {b.shape}")
    out = np.matmul(a.values, b.values)

    def vjp(g):
        bt = np.swapaxes(b.values, -1, -2)
        at = np.swapaxes(a.values, -1, -2)
        _accum(a, _unbroadcast(np.matmul(g, bt), a.shape))
        _accum(b, _unbroadcast(np.matmul(at, g), b.shape))

    return _make_node(out, "matmul", (a, b), vjp)


# ---------------------------------------------------------------------------
# structural ops


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.values for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make_node(out, "concat", ts, vjp)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _as_tensor(a)
    out = a.values.reshape(tuple(shape))

    def vjp(g):
        _accum(a, g.reshape(a.shape))

    return _make_node(out, "reshape", (a,), vjp)


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        _accum(a, g.transpose(inv))

    return _make_node(a.values.transpose(axes), "transpose", (a,), vjp)


def take(a, indices, axis: int = 0) -> Tensor:
    """Gather rows along ``axis``; repeated indices accumulate gradient."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(a.values, idx, axis=axis)

    def vjp(g):
        full = np.zeros_like(a.values)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        _accum(a, full)

    return _make_node(out, "take", (a,), vjp)


def take_along(a, indices, axis: int) -> Tensor:
    """``np.take_along_axis`` with scatter-add gradient."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take_along_axis(a.values, idx, axis=axis)

    def vjp(g):
        full = np.zeros_like(a.values)
        np.put_along_axis(full, idx, g, axis=axis)
        _accum(a, full)

    return _make_node(out, "take_along", (a,), vjp)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    a = _as_tensor(a)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def vjp(g):
        full = np.zeros_like(a.values)
        full[sl] = g
        _accum(a, full)

    return _make_node(a.values[sl], "narrow", (a,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.values, 0.0)

    def vjp(g):
        _accum(a, g * (a.values > 0.0))

    return _make_node(out, "relu", (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-np.clip(a.values, -500.0, 500.0)))

    def vjp(g):
        _accum(a, g * out * (1.0 - out))

    return _make_node(out, "sigmoid", (a,), vjp)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.values)

    def vjp(g):
        _accum(a, g * (1.0 - out * out))

    return _make_node(out, "tanh", (a,), vjp)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.values)

    def vjp(g):
        _accum(a, g * out)

    return _make_node(out, "exp", (a,), vjp)


def log(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(all="ignore"):
        out = np.log(a.values)

    def vjp(g):
        _accum(a, g / a.values)

    return _make_node(out, "log", (a,), vjp)


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(all="ignore"):
        out = np.sqrt(a.values)

    def vjp(g):
        _accum(a, g * 0.5 / out)

    return _make_node(out, "sqrt", (a,), vjp)


def softplus(a) -> Tensor:
    """log(1+exp(x)), computed stably for large |x|."""
    a = _as_tensor(a)
    out = np.maximum(a.values, 0.0) + np.log1p(np.exp(-np.abs(a.values)))

    def vjp(g):
        s = 1.0 / (1.0 + np.exp(-np.clip(a.values, -500.0, 500.0)))
        _accum(a, g * s)

    return _make_node(out, "softplus", (a,), vjp)


def sin(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        _accum(a, g * np.cos(a.values))

    return _make_node(np.sin(a.values), "sin", (a,), vjp)


def cos(a) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        _accum(a, -g * np.sin(a.values))

    return _make_node(np.cos(a.values), "cos", (a,), vjp)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        _accum(a, out * (g - dot))

    return _make_node(out, "softmax", (a,), vjp)


# ---------------------------------------------------------------------------
# reductions


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _make_node(np.asarray(out), "sum", (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = a.values.mean(axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[axis]

    def vjp(g):
        if axis is None:
            _accum(a, np.broadcast_to(g / count, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g / count, a.shape).copy())

    return _make_node(np.asarray(out), "mean", (a,), vjp)


def tmax(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max-pool along one axis; gradient routes to the first argmax."""
    a = _as_tensor(a)
    out = a.values.max(axis=axis, keepdims=keepdims)
    amax = np.expand_dims(a.values.argmax(axis=axis), axis)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(a.values)
        np.put_along_axis(full, amax, g, axis=axis)
        _accum(a, full)

    return _make_node(np.asarray(out), "max", (a,), vjp)


def squared_error(pred, target) -> Tensor:
    """Mean of elementwise squared differences (scalar)."""
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise TensorError(f"squared_error shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.values - target.values
    out = np.asarray((diff * diff).mean())
    n = pred.size

    def vjp(g):
        scale = 2.0 * g / n
        _accum(pred, scale * diff)
        _accum(target, -scale * diff)

    return _make_node(out, "squared_error", (pred, target), vjp)


# ---------------------------------------------------------------------------
# reverse pass


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every grad-enabled node.

    ``loss`` must be scalar. Gradients add onto existing ``.grad`` values,
    so call :func:`zero_grads` between steps.
    """
    if loss.size != 1:
        raise TensorError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise TensorError("loss does not depend on any trainable tensor")
    order = _topo_order(loss)
    _accum(loss, np.ones_like(loss.values))
    for node in reversed(order):
        if node._vjp is not None:
            node._vjp(node.grad)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# randomness and initialization


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic 64-bit generator (PCG64) used everywhere in this package."""
    return np.random.Generator(np.random.PCG64(seed))


def uniform_init(rng: np.random.Generator, fan_in: int, shape: Sequence[int]) -> np.ndarray:
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=tuple(shape))


# ---------------------------------------------------------------------------
# Adam with plateau learning-rate decay


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(params: Mapping[str, Tensor], lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    if lr <= 0:
        raise TensorError("learning rate must be positive")
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.values)
        state.v[name] = np.zeros_like(p.values)
    return state


def adam_step(state: AdamState, params: Mapping[str, Tensor],
              grads: Mapping[str, np.ndarray]) -> None:
    """Standard bias-corrected Adam update, in place on ``params``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.values.shape:
            raise TensorError(f"gradient shape {g.shape} != parameter shape {p.values.shape} for '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.values = p.values - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def plateau_lr(lr: float, history: Sequence[float], factor: float = 0.8,
               window: int = 5, min_lr: float = 1e-6) -> float:
    """Decay ``lr`` when the last ``window`` validation losses show no new minimum.

    ``history`` is ordered oldest to newest. With fewer than ``window + 1``
    entries there is nothing to compare against and ``lr`` is unchanged.
    """
    if len(history) <= window:
        return lr
    recent = min(history[-window:])
    earlier = min(history[:-window])
    if recent >= earlier:
        return max(lr * factor, min_lr)
    return lr


# ---------------------------------------------------------------------------
# checkpoint container
#
# Layout: magic "MFK1", then per parameter (sorted by name):
#   u64 name length | name bytes (utf-8) | u64 rank | i64 dims... | f64 values...
# All integers and floats little-endian.

CHECKPOINT_MAGIC = b"MFK1"


def save_checkpoint(path, params: Mapping[str, Tensor | np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name in sorted(params):
            arr = params[name]
            values = arr.values if isinstance(arr, Tensor) else np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", values.ndim))
            fh.write(struct.pack(f"<{values.ndim}q", *values.shape))
            fh.write(values.astype("<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise TensorError(f"bad checkpoint magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    out: dict[str, np.ndarray] = {}
    pos = 4
    total = len(blob)
    while pos < total:
        (name_len,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        dims = struct.unpack_from(f"<{rank}q", blob, pos)
        pos += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        values = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(dims)
        pos += 8 * count
        out[name] = np.array(values, dtype=np.float64)
    return out
