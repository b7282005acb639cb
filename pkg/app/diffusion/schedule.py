"""Variance schedule of the forward diffusion process"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from app.errors import UserInputError


@dataclass(frozen=True)
class VarianceSchedule:
    """
    Per-step coefficients for steps ``t = 1..T``.

    Arrays are stored 0-based (``betas[t - 1]`` is β_t); the accessors below
    take 1-based steps and treat ``t = 0`` as the clean endpoint with ᾱ_0 = 1.
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self) -> None:
        for array in (self.betas, self.alphas, self.alpha_bars):
            array.setflags(write=False)

    @property
    def num_steps(self) -> int:
        return int(self.betas.shape[0])

    def check_step(self, t: int | np.ndarray, allow_zero: bool = False) -> None:
        steps = np.asarray(t)
        low = 0 if allow_zero else 1
        if steps.size and (steps.min() < low or steps.max() > self.num_steps):
            raise UserInputError(f"diffusion step outside [{low}, {self.num_steps}]: {steps.min()}..{steps.max()}")

    def beta(self, t: int | np.ndarray) -> np.ndarray:
        self.check_step(t)
        return self.betas[np.asarray(t) - 1]

    def alpha(self, t: int | np.ndarray) -> np.ndarray:
        self.check_step(t)
        return self.alphas[np.asarray(t) - 1]

    def alpha_bar(self, t: int | np.ndarray) -> np.ndarray:
        """ᾱ_t for 1-based steps; step 0 gives 1"""
        self.check_step(t, allow_zero=True)
        padded = np.concatenate(([1.0], self.alpha_bars))
        return padded[np.asarray(t)]


def schedule_from_betas(betas: np.ndarray) -> VarianceSchedule:
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 1 or betas.size == 0:
        raise UserInputError("a schedule needs at least one beta")
    if np.any(betas <= 0.0) or np.any(betas >= 1.0):
        raise UserInputError("every beta must lie strictly inside (0, 1)")
    alphas = 1.0 - betas
    return VarianceSchedule(betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))


def make_linear_schedule(num_steps: int, beta_start: float, beta_end: float) -> VarianceSchedule:
    """
    Linearly spaced betas from ``beta_start`` to ``beta_end`` inclusive.

    Args:
        num_steps: Number of diffusion steps T
        beta_start: β_1
        beta_end: β_T

    Returns:
        VarianceSchedule with ᾱ computed as a running product
    """
    if num_steps < 1:
        raise UserInputError(f"num_steps must be positive, got {num_steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise UserInputError(
            f"need 0 < beta_start <= beta_end < 1, got beta_start={beta_start}, beta_end={beta_end}"
        )
    return schedule_from_betas(np.linspace(beta_start, beta_end, num_steps))


def subsequence(schedule: VarianceSchedule, num_inference_steps: int) -> list[int]:
    """
    Evenly spaced, strictly increasing 1-based steps ending at T.

    Step ``i`` of ``S`` is ``floor(i * T / S)``; since ``T / S >= 1`` consecutive
    entries differ by at least one.
    """
    total = schedule.num_steps
    if not 1 <= num_inference_steps <= total:
        raise UserInputError(f"num_inference_steps must lie in [1, {total}], got {num_inference_steps}")
    return [(i * total) // num_inference_steps for i in range(1, num_inference_steps + 1)]
