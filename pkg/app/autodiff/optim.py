"""Adam optimizer"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from app.autodiff.nn import Parameter
from app.errors import DataError, ShapeError


@dataclass
class AdamState:
    """First/second moment estimates and the number of steps taken"""

    first_moments: list[np.ndarray] = field(default_factory=list)
    second_moments: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> AdamState:
        return cls(
            first_moments=[np.zeros_like(p) for p in params],
            second_moments=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """
    One bias-corrected Adam update.

    Args:
        params: Current parameter values
        grads: Gradients, one per parameter
        state: Moments from the previous step (empty lists are treated as zeros)
        learning_rate: Step size
        beta1: Decay of the first moment
        beta2: Decay of the second moment
        epsilon: Denominator floor

    Returns:
        New parameter values and the new state; inputs are not modified
    """
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.first_moments:
        state = AdamState.zeros_like(params)
    step = state.step + 1
    new_params, new_m, new_v = [], [], []
    for param, grad, m, v in zip(params, grads, state.first_moments, state.second_moments):
        if grad.shape != param.shape:
            raise ShapeError("adam_step parameter/gradient", param.shape, grad.shape)
        if m.shape != param.shape or v.shape != param.shape:
            raise ShapeError("adam_step moments", m.shape, v.shape)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        new_params.append(param - learning_rate * m_hat / (np.sqrt(v_hat) + epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, step)


class Adam:
    """Adam over a fixed list of parameters; missing gradients count as zero"""

    def __init__(
        self,
        params: Sequence[Parameter],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> None:
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.state = AdamState.zeros_like([p.data for p in self.params])

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        grads = [np.zeros_like(p.data) if p.grad is None else p.grad for p in self.params]
        values, self.state = adam_step(
            [p.data for p in self.params],
            grads,
            self.state,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.epsilon,
        )
        for param, value in zip(self.params, values):
            param.data = value.astype(param.dtype, copy=False)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {"step": np.asarray(self.state.step)}
        for index, (m, v) in enumerate(zip(self.state.first_moments, self.state.second_moments)):
            state[f"m/{index}"] = m
            state[f"v/{index}"] = v
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        count = len(self.params)
        try:
            first = [np.array(state[f"m/{i}"]) for i in range(count)]
            second = [np.array(state[f"v/{i}"]) for i in range(count)]
            step = int(state["step"])
        except KeyError as exc:
            raise DataError(f"optimizer state is missing {exc}") from exc
        for index, (param, m, v) in enumerate(zip(self.params, first, second)):
            for name, moment in (("first", m), ("second", v)):
                if moment.shape != param.shape:
                    raise ShapeError(f"optimizer {name} moment {index}", moment.shape, param.shape)
        self.state = AdamState(first, second, step)
