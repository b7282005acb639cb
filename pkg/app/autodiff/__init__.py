"""Reverse-mode autodiff engine and layers"""

from app.autodiff.nn import Conv2d, GroupNorm, Linear, Module, Parameter
from app.autodiff.optim import Adam, AdamState, adam_step
from app.autodiff.tensor import Tensor, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "Conv2d",
    "GroupNorm",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "adam_step",
    "no_grad",
]
