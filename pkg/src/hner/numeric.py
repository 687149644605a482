"""Array-level numerical kernels.

These operate on plain numpy arrays (float64) and carry no gradient
bookkeeping. The differentiable versions in :mod:`hner.autograd` use them as
forward kernels.
"""

from __future__ import annotations

import gc
import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf, expit

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a vector, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("empty input")
    return arr


def logsumexp(scores) -> float:
    """Return ``log(sum(exp(scores)))`` for a non-empty vector.

    Entries may be ``-inf`` (they contribute nothing) but not all of them.
    """
    s = _vector(scores)
    if np.isnan(s).any() or np.isposinf(s).any():
        raise ValueError("entries must be finite or -inf")
    m = s.max()
    if m == -np.inf:
        raise ValueError("all entries are -inf")
    return float(m + np.log(np.exp(s - m).sum()))


def logsumexp_axis(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable reduction along ``axis``; all ``-inf`` slices give ``-inf``."""
    m = np.max(a, axis=axis, keepdims=True)
    if np.isfinite(m).all():
        return np.squeeze(np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m, axis=axis)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis, keepdims=True)) + safe
    return np.squeeze(out, axis=axis)


def softmax(scores) -> np.ndarray:
    s = _vector(scores)
    return softmax_axis(s, axis=-1)


def softmax_axis(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    e = np.exp(a - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> np.ndarray:
    """Normalize over the last axis with the population variance."""
    x = np.asarray(x, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("empty input")
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ValueError(
            f"length mismatch: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}"
        )
    if eps < 0:
        raise ValueError("eps must be non-negative")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / SQRT2)) + x * np.exp(-0.5 * x * x) * INV_SQRT_2PI


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def finite_difference_gradient(
    f: Callable[[], float], params: Sequence, eps: float = 1e-5
) -> list[np.ndarray]:
    """Central-difference gradient of ``f`` with respect to ``params``.

    ``params`` holds float64 arrays (or objects with a ``.data`` array) that
    ``f`` reads when called. Each coordinate is perturbed in place and
    restored afterwards.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        return [_central_differences(f, p, eps) for p in params]
    finally:
        if gc_was_enabled:
            gc.enable()


def _central_differences(f, p, eps: float) -> np.ndarray:
    arr = p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p
    flat = arr.reshape(-1)
    if not np.shares_memory(flat, arr):
        raise ValueError("parameter arrays must be contiguous")
    g = np.zeros(flat.shape)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = float(f())
        flat[i] = orig - eps
        down = float(f())
        flat[i] = orig
        g[i] = (up - down) / (2.0 * eps)
    return g.reshape(arr.shape)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """Norm-wise relative error ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / denom)
