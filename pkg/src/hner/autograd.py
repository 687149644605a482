"""A small reverse-mode automatic differentiation engine.

Operations on :class:`Tensor` objects are recorded on the innermost active
:class:`Tape`. Outside of a tape nothing is recorded, so inference runs
without any gradient bookkeeping::

    with Tape() as tape:
        loss = (w @ x).sum()
    backward(loss, tape)   # accumulates into w.grad
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import numeric

_TAPES: list["Tape"] = []


class Tensor:
    """Dense float64 array that can take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        if type(data) is not np.ndarray or data.dtype != np.float64:
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __float__(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"cannot convert tensor of shape {self.shape} to float")
        return float(self.data.reshape(()))

    def item(self) -> float:
        return float(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)
    __getitem__ = lambda self, index: getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of the operations executed while it is active."""

    def __init__(self):
        self.records: list[tuple[tuple[Tensor, ...], Tensor, BackwardFn]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, inputs: tuple, output: Tensor, backward_fn: BackwardFn) -> None:
        self.records.append((inputs, output, backward_fn))

    def backward(self, loss: Tensor) -> list[Tensor]:
        return backward(loss, self)


def current_tape() -> Optional[Tape]:
    return _TAPES[-1] if _TAPES else None


def backward(loss: Tensor, tape: Tape) -> list[Tensor]:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    Leaves are ``requires_grad`` tensors not produced by an operation on this
    tape. Gradients add onto existing ``.grad`` buffers; call
    :func:`zero_grad` between steps. Returns the leaves that were touched.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    produced = {id(out) for _, out, _ in tape.records}
    touched: dict[int, Tensor] = {}

    def deposit(t: Tensor, g: np.ndarray) -> None:
        t.grad = g.copy() if t.grad is None else t.grad + g
        touched[id(t)] = t

    seed = np.ones_like(loss.data)
    if id(loss) not in produced:
        if loss.requires_grad:
            deposit(loss, seed)
        return list(touched.values())

    pending: dict[int, np.ndarray] = {id(loss): seed}
    for inputs, out, fn in reversed(tape.records):
        g = pending.pop(id(out), None)
        if g is None:
            continue
        for inp, ig in zip(inputs, fn(g)):
            if ig is None or not inp.requires_grad:
                continue
            if id(inp) in produced:
                prev = pending.get(id(inp))
                pending[id(inp)] = ig if prev is None else prev + ig
            else:
                deposit(inp, ig)
    return list(touched.values())


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, inputs: tuple, backward_fn: BackwardFn) -> Tensor:
    out = Tensor(data)
    if _TAPES and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPES[-1].record(inputs, out, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _result(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = numeric.sigmoid(a.data)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU."""
    a = _as_tensor(a)
    return _result(numeric.gelu(a.data), (a,), lambda g: (g * numeric.gelu_grad(a.data),))


def lstm_cell(z, c) -> Tensor:
    """Fused LSTM cell.

    ``z`` holds the packed gate pre-activations ``[..., 4h]`` in the order
    input, forget, cell, output; ``c`` is the previous cell state ``[..., h]``.
    Returns ``concat([h_new, c_new], -1)``.
    """
    z, c = _as_tensor(z), _as_tensor(c)
    h = c.shape[-1]
    if z.shape[-1] != 4 * h:
        raise ValueError(f"gate width {z.shape[-1]} != 4 * {h}")
    zd = z.data
    i = numeric.sigmoid(zd[..., :h])
    f = numeric.sigmoid(zd[..., h : 2 * h])
    g = np.tanh(zd[..., 2 * h : 3 * h])
    o = numeric.sigmoid(zd[..., 3 * h :])
    c_new = f * c.data + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    def fn(grad):
        gh, gc = grad[..., :h], grad[..., h:]
        gc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                gc * g * i * (1.0 - i),
                gc * c.data * f * (1.0 - f),
                gc * i * (1.0 - g * g),
                gh * tc * o * (1.0 - o),
            ],
            axis=-1,
        )
        return dz, gc * f

    return _result(np.concatenate([h_new, c_new], axis=-1), (z, c), fn)


def dropout(a, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when ``rate`` is 0 or ``rng`` is None."""
    if rate <= 0.0 or rng is None:
        return _as_tensor(a)
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    keep = (rng.random(_as_tensor(a).shape) >= rate) / (1.0 - rate)
    return mul(a, keep)


# -- linear algebra and reductions ------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul expects operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def fn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), fn)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(a.data.sum(axis=axis, keepdims=keepdims), (a,), fn)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) / float(n)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    y = numeric.softmax_axis(a.data, axis=axis)
    return _result(
        y, (a,), lambda g: (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)
    )


def logsumexp(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    out = numeric.logsumexp_axis(a.data, axis=axis)

    def fn(g):
        w = np.exp(a.data - np.expand_dims(out, axis))
        return (np.expand_dims(g, axis) * w,)

    return _result(out, (a,), fn)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis (population variance)."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError(f"length mismatch: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    inv_d = 1.0 / d
    centered = x.data - x.data.sum(axis=-1, keepdims=True) * inv_d
    rstd = 1.0 / np.sqrt((centered * centered).sum(axis=-1, keepdims=True) * inv_d + eps)
    xhat = centered * rstd

    def fn(g):
        dxhat = g * gamma.data
        dx = rstd * (
            dxhat
            - dxhat.sum(axis=-1, keepdims=True) * inv_d
            - xhat * ((dxhat * xhat).sum(axis=-1, keepdims=True) * inv_d)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), fn)


# -- shape manipulation ------------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    return _result(
        np.transpose(a.data, axes),
        (a,),
        lambda g: (np.transpose(g, None if axes is None else np.argsort(axes)),),
    )


def getitem(a, index) -> Tensor:
    """Indexing (basic or integer-array); gradients scatter-add back."""
    a = _as_tensor(a)

    def fn(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return _result(a.data[index], (a,), fn)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    if not ts:
        raise ValueError("nothing to concatenate")
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _result(
        np.concatenate([t.data for t in ts], axis=axis),
        ts,
        lambda g: tuple(np.split(g, bounds, axis=axis)),
    )
