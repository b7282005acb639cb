"""Classifier-free guidance: condition dropout and guided noise"""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.conditions.labels import ConditionBatch, ConditionLabel
from app.errors import ShapeError, UserInputError


class GuidanceConfig(BaseModel):
    """Guidance weight and unconditional training probability"""

    model_config = ConfigDict(frozen=True)

    weight: float = Field(default=2.0, ge=0.0, description="[reference] CFG weight w at inference")
    dropout_probability: float = Field(
        default=0.1, ge=0.0, le=1.0, description="[reference] chance of training the unconditional model"
    )


def dropout_condition(
    condition: ConditionLabel, rng: np.random.Generator, dropout_probability: float
) -> ConditionLabel | None:
    """Replace phase and toolset together with the null token with the given probability"""
    return None if rng.random() < dropout_probability else condition


def dropout_conditions(
    conditions: ConditionBatch, rng: np.random.Generator, dropout_probability: float
) -> ConditionBatch:
    """Batch form of :func:`dropout_condition`, one draw per row"""
    return conditions.nullify(rng.random(len(conditions)) < dropout_probability)


def cfg_combine(eps_conditional: np.ndarray, eps_unconditional: np.ndarray, w: float) -> np.ndarray:
    """Guided noise ``(w + 1) * eps_conditional - w * eps_unconditional``"""
    if eps_conditional.shape != eps_unconditional.shape:
        raise ShapeError("cfg_combine", eps_conditional.shape, eps_unconditional.shape)
    if w < 0:
        raise UserInputError(f"guidance weight must be non-negative, got {w}")
    return (w + 1.0) * eps_conditional - w * eps_unconditional


def implied_condition_gradient(
    eps_conditional: np.ndarray, eps_unconditional: np.ndarray, alpha_bar_t: float
) -> np.ndarray:
    """
    Score of the condition given x_t implied by the two noise predictions.

    Returns ``-(eps_conditional - eps_unconditional) / sqrt(1 - alpha_bar_t)``.
    Used for inspection only; sampling goes through :func:`cfg_combine`.
    """
    if eps_conditional.shape != eps_unconditional.shape:
        raise ShapeError("implied_condition_gradient", eps_conditional.shape, eps_unconditional.shape)
    if not 0.0 < alpha_bar_t < 1.0:
        raise UserInputError(f"alpha_bar_t must lie in (0, 1), got {alpha_bar_t}")
    return -(eps_conditional - eps_unconditional) / np.sqrt(1.0 - alpha_bar_t)
