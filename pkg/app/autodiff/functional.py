"""Differentiable activations, image kernels and losses"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit, log_softmax, softmax

from app.autodiff.tensor import Tensor, lift
from app.errors import ShapeError


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(x.data * mask, (x,), lambda grad: (grad * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = expit(x.data)
    return Tensor.from_op(out, (x,), lambda grad: (grad * out * (1.0 - out),), "sigmoid")


def silu(x: Tensor) -> Tensor:
    gate = expit(x.data)

    def backward(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * (gate + x.data * gate * (1.0 - gate)),)

    return Tensor.from_op(x.data * gate, (x,), backward, "silu")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` for a batch of row vectors"""
    out = x @ weight
    return out if bias is None else out + bias


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    2-d cross-correlation of an ``[N, C, H, W]`` batch with ``[O, C, kh, kw]`` kernels.

    The kernel is applied one tap at a time as a channel contraction, which
    keeps the reduction order fixed for a given shape.
    """
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError("conv2d input/kernel", x.shape, weight.shape)
    n, _, h, w = x.shape
    out_channels, _, kh, kw = weight.shape
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError("conv2d kernel larger than padded input", x.shape, weight.shape)

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))

    def window(i: int, j: int) -> tuple[slice, slice, slice, slice]:
        return (
            slice(None),
            slice(None),
            slice(i, i + stride * h_out, stride),
            slice(j, j + stride * w_out, stride),
        )

    acc = np.zeros((n, h_out, w_out, out_channels), dtype=np.result_type(x.data, weight.data))
    for i in range(kh):
        for j in range(kw):
            acc += np.tensordot(padded[window(i, j)], weight.data[:, :, i, j], axes=([1], [1]))
    out = acc.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, -1, 1, 1)

    def backward(grad: np.ndarray) -> tuple[np.ndarray, ...]:
        grad_nhwc = grad.transpose(0, 2, 3, 1)
        grad_padded = np.zeros_like(padded)
        grad_weight = np.zeros_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                grad_weight[:, :, i, j] = np.tensordot(
                    grad_nhwc, padded[window(i, j)], axes=([0, 1, 2], [0, 2, 3])
                )
                grad_padded[window(i, j)] += np.tensordot(
                    grad_nhwc, weight.data[:, :, i, j], axes=([3], [0])
                ).transpose(0, 3, 1, 2)
        grad_x = grad_padded[:, :, padding : padding + h, padding : padding + w]
        if bias is None:
            return grad_x, grad_weight
        return grad_x, grad_weight, grad.sum(axis=(0, 2, 3))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(np.ascontiguousarray(out), parents, backward, "conv2d")


def group_norm(
    x: Tensor, gamma: Tensor, beta: Tensor, num_groups: int, eps: float = 1e-5
) -> Tensor:
    """Normalize ``[N, C, H, W]`` features over channel groups and space"""
    if x.ndim != 4 or x.shape[1] % num_groups != 0:
        raise ShapeError(f"group_norm with {num_groups} groups", x.shape)
    n, c, h, w = x.shape
    grouped = x.data.reshape(n, num_groups, -1)
    size = grouped.shape[2]
    mean = grouped.mean(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(grouped.var(axis=2, keepdims=True) + eps)
    normalized = ((grouped - mean) * inv_std).reshape(n, c, h, w)
    scale = gamma.data.reshape(1, c, 1, 1)
    out = normalized * scale + beta.data.reshape(1, c, 1, 1)

    def backward(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d_norm = (grad * scale).reshape(n, num_groups, size)
        x_hat = normalized.reshape(n, num_groups, size)
        grad_x = (
            inv_std
            / size
            * (
                size * d_norm
                - d_norm.sum(axis=2, keepdims=True)
                - x_hat * (d_norm * x_hat).sum(axis=2, keepdims=True)
            )
        )
        return (
            grad_x.reshape(n, c, h, w),
            (grad * normalized).sum(axis=(0, 2, 3)),
            grad.sum(axis=(0, 2, 3)),
        )

    return Tensor.from_op(out, (x, gamma, beta), backward, "group_norm")


def avg_pool2d(x: Tensor, kernel: int = 2) -> Tensor:
    if x.ndim != 4 or x.shape[2] % kernel or x.shape[3] % kernel:
        raise ShapeError(f"avg_pool2d with kernel {kernel}", x.shape)
    n, c, h, w = x.shape
    out = x.data.reshape(n, c, h // kernel, kernel, w // kernel, kernel).mean(axis=(3, 5))

    def backward(grad: np.ndarray) -> tuple[np.ndarray]:
        spread = np.repeat(np.repeat(grad, kernel, axis=2), kernel, axis=3)
        return (spread / (kernel * kernel),)

    return Tensor.from_op(out, (x,), backward, "avg_pool2d")


def upsample_nearest2d(x: Tensor, scale: int = 2) -> Tensor:
    if x.ndim != 4:
        raise ShapeError("upsample_nearest2d", x.shape)
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, scale, axis=2), scale, axis=3)

    def backward(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad.reshape(n, c, h, scale, w, scale).sum(axis=(3, 5)),)

    return Tensor.from_op(out, (x,), backward, "upsample_nearest2d")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as exc:
        raise ShapeError("concat", *(a.shape for a in arrays)) from exc
    splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]

    def backward(grad: np.ndarray) -> list[np.ndarray]:
        return np.split(grad, splits, axis=axis)

    return Tensor.from_op(out, tuple(tensors), backward, "concat")


def mean_squared_error(prediction: Tensor, target: Tensor | np.ndarray) -> Tensor:
    """Mean over every element of the squared difference"""
    target = lift(target, prediction)
    if prediction.shape != target.shape:
        raise ShapeError("mean_squared_error", prediction.shape, target.shape)
    diff = prediction.data - target.data
    count = diff.size

    def backward(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        scaled = grad * 2.0 * diff / count
        return scaled, -scaled

    out = np.asarray(np.mean(diff * diff), dtype=prediction.dtype)
    return Tensor.from_op(out, (prediction, target), backward, "mse")


def binary_cross_entropy_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean element-wise binary cross-entropy, computed from logits"""
    if logits.shape != targets.shape:
        raise ShapeError("binary_cross_entropy_with_logits", logits.shape, targets.shape)
    z = logits.data
    losses = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    count = z.size

    def backward(grad: np.ndarray) -> tuple[np.ndarray]:
        return (grad * (expit(z) - targets) / count,)

    return Tensor.from_op(np.asarray(losses.mean(), dtype=z.dtype), (logits,), backward, "bce")


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean categorical cross-entropy of ``[N, P]`` logits against integer labels"""
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy logits/labels", logits.shape, labels.shape)
    rows = np.arange(labels.shape[0])
    log_probs = log_softmax(logits.data, axis=1)
    loss = -log_probs[rows, labels].mean()

    def backward(grad: np.ndarray) -> tuple[np.ndarray]:
        delta = softmax(logits.data, axis=1)
        delta[rows, labels] -= 1.0
        return (grad * delta / labels.shape[0],)

    return Tensor.from_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward, "cross_entropy")
