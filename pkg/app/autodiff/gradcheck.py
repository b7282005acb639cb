"""Finite-difference checks for tape gradients"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from app.autodiff.tensor import Tensor


def numerical_gradient(
    fn: Callable[[Sequence[Tensor]], Tensor],
    arrays: Sequence[np.ndarray],
    index: int,
    eps: float = 1e-5,
) -> np.ndarray:
    """Central differences of ``fn`` with respect to ``arrays[index]``"""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    for position in np.ndindex(target.shape):
        original = target[position]
        target[position] = original + eps
        upper = fn([Tensor(a) for a in base]).item()
        target[position] = original - eps
        lower = fn([Tensor(a) for a in base]).item()
        target[position] = original
        grad[position] = (upper - lower) / (2.0 * eps)
    return grad


def gradcheck(
    fn: Callable[[Sequence[Tensor]], Tensor],
    arrays: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """
    Compare tape gradients with central differences.

    Returns:
        The largest relative error ``|analytic - numeric| / (|analytic| + |numeric|)``
        over all inputs, measured in the Euclidean norm
    """
    inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    fn(inputs).backward()
    worst = 0.0
    for index, tensor in enumerate(inputs):
        analytic = np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad
        numeric = numerical_gradient(fn, arrays, index, eps)
        scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
        if scale == 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / scale))
    return worst
