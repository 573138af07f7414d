"""Activations, loss and the finite-difference gradient checker.

Training runs in float32 by default; everything here is dtype-preserving so the
same code paths can be exercised in float64 for gradient checks.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

PROB_FLOOR = 1e-12

DEFAULT_DTYPE = np.float32


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis, with max subtraction."""
    z = np.asarray(z)
    if z.shape[-1] == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(p: np.ndarray, y: int) -> float:
    """-log p[y] with p[y] floored at 1e-12."""
    p = np.asarray(p)
    if not 0 <= y < p.shape[-1]:
        raise IndexError(f"label {y} out of range for {p.shape[-1]} classes")
    return float(-np.log(max(float(p[y]), PROB_FLOOR)))


def batch_cross_entropy(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row cross-entropy for a (B, K) probability matrix."""
    picked = probs[np.arange(len(labels)), labels]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], theta: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of ``f`` at ``theta`` (float64)."""
    theta = np.array(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f(theta)
        flat[i] = old - eps
        fm = f(theta)
        flat[i] = old
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(theta.shape)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """||a - b|| / (||a|| + ||b||); 0 when both are (numerically) zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom < floor:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"{name} contains NaN or Inf")
