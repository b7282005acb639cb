"""Tape-based reverse-mode automatic differentiation over numpy arrays"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from app.errors import NumericalError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_grad_mode = threading.local()


def grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording the graph in the current thread"""
    previous = grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def as_array(value: object, dtype: np.dtype | type | None = None) -> np.ndarray:
    """Convert to a floating point array, keeping float arrays as they are"""
    array = np.asarray(value, dtype=dtype)
    if dtype is None and not np.issubdtype(array.dtype, np.floating):
        array = array.astype(np.float64)
    return array


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """
    A node of the computation graph.

    Parents and the backward rule are recorded only when at least one input
    requires a gradient, so inference never builds a graph.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data: object,
        requires_grad: bool = False,
        *,
        parents: tuple[Tensor, ...] = (),
        backward: BackwardFn | None = None,
        op: str = "",
    ) -> None:
        self.data: np.ndarray = as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def from_op(
        data: np.ndarray, parents: Sequence[Tensor], backward: BackwardFn, op: str
    ) -> Tensor:
        """
        Create an op output, recording the graph only if it is needed.

        Raises:
            NumericalError: The op produced NaN or Inf
        """
        if not np.all(np.isfinite(data)):
            raise NumericalError(f"non-finite output from {op}")
        if grad_enabled() and any(parent.requires_grad for parent in parents):
            return Tensor(data, True, parents=tuple(parents), backward=backward, op=op)
        return Tensor(data, op=op)

    def backward(self) -> None:
        """
        Populate ``grad`` on every reachable node that requires a gradient.

        Gradients accumulate across calls until ``grad`` is reset; each call
        propagates from this node only, so repeated calls add the same amounts.
        """
        if self.data.size != 1:
            raise ShapeError("backward() needs a scalar loss", self.shape)

        order = self._topological_order()
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if not np.all(np.isfinite(grad)):
                raise NumericalError(f"non-finite gradient at {node.op or 'leaf'} node")
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent_grad.shape != parent.shape:
                    raise ShapeError(f"gradient shape from {node.op}", parent_grad.shape, parent.shape)
                key = id(parent)
                pending[key] = parent_grad if key not in pending else pending[key] + parent_grad

    def _topological_order(self) -> list[Tensor]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other: Tensor | float | np.ndarray) -> Tensor:
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Tensor | float | np.ndarray) -> Tensor:
        return add(self, neg(lift(other, self)))

    def __rsub__(self, other: Tensor | float | np.ndarray) -> Tensor:
        return add(lift(other, self), neg(self))

    def __mul__(self, other: Tensor | float | np.ndarray) -> Tensor:
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> Tensor:
        return neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)


def lift(value: Tensor | float | np.ndarray, like: Tensor | None = None) -> Tensor:
    """Wrap constants; plain numbers take the dtype of ``like``"""
    if isinstance(value, Tensor):
        return value
    if like is not None and np.isscalar(value):
        return Tensor(np.asarray(value, dtype=like.dtype))
    return Tensor(value)


def _pair(
    a: Tensor | float | np.ndarray, b: Tensor | float | np.ndarray
) -> tuple[Tensor, Tensor]:
    left = a if isinstance(a, Tensor) else None
    right = b if isinstance(b, Tensor) else None
    return lift(a, right), lift(b, left)


def add(a: Tensor | float | np.ndarray, b: Tensor | float | np.ndarray) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeError("add", a.shape, b.shape) from exc

    def backward(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(grad, a.shape), unbroadcast(grad, b.shape)

    return Tensor.from_op(out, (a, b), backward, "add")


def mul(a: Tensor | float | np.ndarray, b: Tensor | float | np.ndarray) -> Tensor:
    a, b = _pair(a, b)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeError("multiply", a.shape, b.shape) from exc

    def backward(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(grad * b.data, a.shape), unbroadcast(grad * a.data, b.shape)

    return Tensor.from_op(out, (a, b), backward, "mul")


def neg(a: Tensor) -> Tensor:
    return Tensor.from_op(-a.data, (a,), lambda grad: (-grad,), "neg")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-d tensors"""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return grad @ b.data.T, a.data.T @ grad

    return Tensor.from_op(a.data @ b.data, (a, b), backward, "matmul")


def reduce_sum(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(grad: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).copy(),)

    return Tensor.from_op(np.asarray(out), (a,), backward, "sum")


def reduce_mean(a: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    total = reduce_sum(a, axis, keepdims)
    count = a.data.size // max(total.data.size, 1)
    return mul(total, 1.0 / count)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError("reshape", a.shape, tuple(shape)) from exc
    return Tensor.from_op(out, (a,), lambda grad: (grad.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))
    return Tensor.from_op(a.data.transpose(axes), (a,), lambda grad: (grad.transpose(inverse),), "transpose")
