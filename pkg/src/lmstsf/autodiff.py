"""Graph-based reverse-mode differentiation over numpy arrays, plus Adam.

Each op builds a :class:`Tensor` that remembers its parents and a closure
mapping the output gradient to parent gradients. Complex tensors carry
gradients as ``dL/dRe + 1j * dL/dIm``.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from . import numerics
from .numerics import TEMPORAL


class NonFiniteError(FloatingPointError):
    """Raised when a loss or one of its intermediates is NaN/Inf."""


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "op", "requires_grad")

    def __init__(self, value, parents: tuple = (), backward_fn: Callable | None = None,
                 op: str = "const", requires_grad: bool | None = None):
        self.value = np.asarray(value)
        if not np.iscomplexobj(self.value):
            self.value = self.value.astype(np.float64, copy=False)
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def backward(self):
        backward(self)


class Param(Tensor):
    """A trainable leaf with a stable name."""

    __slots__ = ("name",)

    def __init__(self, value, name: str):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True, op="param")
        self.name = name
        self.grad = np.zeros_like(self.value)

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _real_like(g: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return g if np.iscomplexobj(ref) else g.real


def _topo(root: Tensor) -> list[Tensor]:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every reachable :class:`Param`."""
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    order = _topo(loss)
    if not np.isfinite(loss.value).all():
        for node in order:
            if not np.isfinite(node.value).all():
                raise NonFiniteError(f"non-finite value first produced by op '{node.op}' "
                                     f"(shape {node.value.shape})")
        raise NonFiniteError("loss is non-finite")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Param):
            node.grad += g
            continue
        if node.backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def zero_grads(params: Iterable[Param]) -> None:
    for p in params:
        p.grad[...] = 0.0


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return Tensor(a.value + b.value, (a, b),
                  lambda g: (_real_like(_unbroadcast(g, a.shape), a.value),
                             _real_like(_unbroadcast(g, b.shape), b.value)), "add")


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return Tensor(a.value - b.value, (a, b),
                  lambda g: (_real_like(_unbroadcast(g, a.shape), a.value),
                             _real_like(_unbroadcast(-g, b.shape), b.value)), "sub")


def neg(a) -> Tensor:
    a = tensor(a)
    return Tensor(-a.value, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    av, bv = a.value, b.value

    def bw(g):
        ga = _real_like(_unbroadcast(g * np.conj(bv), av.shape), av)
        gb = _real_like(_unbroadcast(g * np.conj(av), bv.shape), bv)
        return ga, gb

    return Tensor(av * bv, (a, b), bw, "mul")


def sigmoid(a) -> Tensor:
    a = tensor(a)
    # tanh form never overflows
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Tensor(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def relu(a) -> Tensor:
    a = tensor(a)
    mask = a.value > 0
    return Tensor(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


# ---------------------------------------------------------------------------
# structural
# ---------------------------------------------------------------------------

def affine(x, weight, bias, axis: str = TEMPORAL) -> Tensor:
    x, w, b = tensor(x), tensor(weight), tensor(bias)
    out = numerics.affine_apply(x.value, w.value, b.value, axis)

    def bw(g):
        if axis == TEMPORAL:
            gt = np.swapaxes(g, 1, 2)
            xt = np.swapaxes(x.value, 1, 2)
            gx = np.swapaxes(gt @ w.value.T, 1, 2)
            gw = xt.reshape(-1, xt.shape[-1]).T @ gt.reshape(-1, gt.shape[-1])
            gb = g.sum(axis=(0, 2))
        else:
            gx = g @ w.value.T
            gw = x.value.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            gb = g.sum(axis=(0, 1))
        return gx, gw, gb

    return Tensor(out, (x, w, b), bw, f"affine[{axis}]")


def avg_pool(x, factor: int) -> Tensor:
    x = tensor(x)
    out = numerics.avg_pool_downsample(x.value, factor)
    steps = out.shape[1]

    def bw(g):
        gx = np.zeros_like(x.value)
        gx[:, : steps * factor] = np.repeat(g, factor, axis=1) / factor
        return (gx,)

    return Tensor(out, (x,), bw, "avg_pool")


def lagged_difference(x) -> Tensor:
    """``out[t] = x[t] - x[t-1]`` along time, ``out[0] = 0``."""
    x = tensor(x)
    out = np.zeros_like(x.value)
    out[:, 1:] = x.value[:, 1:] - x.value[:, :-1]

    def bw(g):
        gx = np.zeros_like(g)
        gx[:, 1:] += g[:, 1:]
        gx[:, :-1] -= g[:, 1:]
        return (gx,)

    return Tensor(out, (x,), bw, "lagged_difference")


def concat(xs: Sequence, axis: int) -> Tensor:
    xs = [tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(xs)))

    return Tensor(np.concatenate([x.value for x in xs], axis=axis), tuple(xs), bw, "concat")


def rfft(x, axis: int = 1) -> Tensor:
    x = tensor(x)
    n = x.shape[axis]

    def bw(g):
        # dL/dx_t = Re sum_k g_k e^{+2 pi i k t / n}; conj(fft(conj(.))) realizes the + sign
        gm = np.moveaxis(g, axis, -1)
        full = np.zeros(gm.shape[:-1] + (n,), dtype=complex)
        full[..., : gm.shape[-1]] = gm
        gx = np.conj(numerics.fft(np.conj(full), axis=-1)).real
        return (np.moveaxis(gx, -1, axis),)

    return Tensor(numerics.rfft(x.value, axis=axis), (x,), bw, "rfft")


def irfft(z, n: int, axis: int = 1) -> Tensor:
    z = tensor(z)
    nbins = n // 2 + 1
    weights = np.full(nbins, 2.0 / n)
    weights[0] = 1.0 / n
    if n % 2 == 0:
        weights[-1] = 1.0 / n
    shape = [1] * z.value.ndim
    shape[axis] = nbins
    weights = weights.reshape(shape)

    def bw(g):
        gz = numerics.rfft(g, axis=axis) * weights
        return (gz,)

    return Tensor(numerics.irfft(z.value, n, axis=axis), (z,), bw, "irfft")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def mean(x) -> Tensor:
    x = tensor(x)
    n = x.value.size
    return Tensor(np.array(x.value.mean()), (x,), lambda g: (np.full(x.shape, g / n),), "mean")


def mse(pred, target) -> Tensor:
    """Mean squared error over every entry."""
    pred, target = tensor(pred), tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.value - target.value
    n = diff.size

    def bw(g):
        gp = 2.0 * g * diff / n
        return gp, -gp

    return Tensor(np.array(np.mean(diff * diff)), (pred, target), bw, "mse")


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; ``weight_decay`` adds an L2 term to the gradient."""

    def __init__(self, params: Sequence[Param], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.value
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        zero_grads(self.params)


def adam_step(params: Sequence[Param], state: Adam) -> None:
    if [id(p) for p in params] != [id(p) for p in state.params]:
        raise ValueError("Adam state was built for a different parameter list")
    state.step()
