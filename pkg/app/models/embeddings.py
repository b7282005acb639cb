"""Time, phase and toolset embeddings of the denoiser"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.autodiff import Linear, Module, Tensor, no_grad
from app.autodiff import functional as F
from app.conditions.labels import NULL_PHASE, ConditionBatch, ConditionLabel
from app.errors import ShapeError, UserInputError


def sinusoidal_embedding(steps: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Transformer-style sin/cos features of the diffusion step, ``[N, dim]``"""
    half = dim // 2
    frequencies = np.exp(-np.log(max_period) * np.arange(half) / max(half - 1, 1))
    angles = np.asarray(steps, dtype=np.float64)[:, None] * frequencies[None, :]
    embedding = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    if dim % 2:
        embedding = np.pad(embedding, ((0, 0), (0, 1)))
    return embedding


@dataclass(frozen=True)
class ConditionEmbedding:
    """The three embeddings of one (step, condition) pair"""

    time_embedding: np.ndarray
    phase_embedding: np.ndarray
    toolset_embedding: np.ndarray

    @property
    def concatenated(self) -> np.ndarray:
        return np.concatenate([self.time_embedding, self.phase_embedding, self.toolset_embedding])


class ConditionEmbedder(Module):
    """
    Maps (t, phase, toolset) to ``[emb_t, emb_p, emb_s]`` of length ``3 * dim``.

    The phase one-hot has an extra slot and the toolset input an extra flag,
    both set only for the null condition, so the null token never shares an
    input encoding with a real condition.
    """

    def __init__(
        self, num_phases: int, num_tools: int, dim: int, rng: np.random.Generator, dtype: np.dtype = np.float64
    ) -> None:
        self.num_phases = num_phases
        self.num_tools = num_tools
        self.dim = dim
        self.time_in = Linear(dim, dim, rng, dtype)
        self.time_out = Linear(dim, dim, rng, dtype)
        self.phase_proj = Linear(num_phases + 1, dim, rng, dtype)
        self.toolset_in = Linear(num_tools + 1, dim, rng, dtype)
        self.toolset_out = Linear(dim, dim, rng, dtype)
        self.dtype = dtype

    @property
    def output_dim(self) -> int:
        return 3 * self.dim

    def encode_inputs(self, conditions: ConditionBatch) -> tuple[np.ndarray, np.ndarray]:
        """One-hot phases with a null slot, and toolset flags with a null flag"""
        if conditions.num_tools != self.num_tools:
            raise ShapeError("toolset width", (conditions.num_tools,), (self.num_tools,))
        phases = conditions.phases
        real = phases != NULL_PHASE
        if np.any((phases[real] < 0) | (phases[real] >= self.num_phases)):
            raise UserInputError(f"phase outside [0, {self.num_phases})")
        count = len(conditions)
        phase_input = np.zeros((count, self.num_phases + 1), dtype=self.dtype)
        phase_input[np.arange(count), np.where(real, phases, self.num_phases)] = 1.0
        toolset_input = np.zeros((count, self.num_tools + 1), dtype=self.dtype)
        toolset_input[:, : self.num_tools] = np.where(real[:, None], conditions.toolsets, 0.0)
        toolset_input[:, self.num_tools] = (~real).astype(self.dtype)
        return phase_input, toolset_input

    def embed_parts(self, steps: np.ndarray, conditions: ConditionBatch) -> tuple[Tensor, Tensor, Tensor]:
        phase_input, toolset_input = self.encode_inputs(conditions)
        sinusoid = Tensor(sinusoidal_embedding(steps, self.dim).astype(self.dtype))
        time = self.time_out(F.silu(self.time_in(sinusoid)))
        phase = self.phase_proj(Tensor(phase_input))
        toolset = self.toolset_out(F.silu(self.toolset_in(Tensor(toolset_input))))
        return time, phase, toolset

    def forward(self, steps: np.ndarray, conditions: ConditionBatch) -> Tensor:
        return F.concat(self.embed_parts(steps, conditions), axis=1)

    def null_condition_embedding(self) -> tuple[np.ndarray, np.ndarray]:
        """Phase and toolset embeddings of the null token"""
        with no_grad():
            _, phase, toolset = self.embed_parts(np.ones(1), ConditionBatch.null(1, self.num_tools))
        return phase.data[0], toolset.data[0]


def embed_condition(
    embedder: ConditionEmbedder,
    t: int,
    phase: int | None,
    toolset: Sequence[int] | None,
) -> ConditionEmbedding:
    """
    Embed a single step and condition.

    Args:
        embedder: Embedding layers of a denoiser
        t: Diffusion step
        phase: Phase id, or ``None`` for the null condition
        toolset: Binary tool vector, or ``None`` for the null condition

    Returns:
        ConditionEmbedding whose concatenation has length ``3 * dim``
    """
    if (phase is None) != (toolset is None):
        raise UserInputError("phase and toolset must both be given or both be None")
    if phase is not None and not 0 <= phase < embedder.num_phases:
        raise UserInputError(f"phase {phase} outside [0, {embedder.num_phases})")
    if toolset is not None and len(toolset) != embedder.num_tools:
        raise ShapeError("toolset length", (len(toolset),), (embedder.num_tools,))
    label = None if phase is None or toolset is None else ConditionLabel(phase, tuple(int(f) for f in toolset))
    batch = ConditionBatch.from_labels([label], embedder.num_tools)
    with no_grad():
        time, phase_emb, toolset_emb = embedder.embed_parts(np.array([t]), batch)
    return ConditionEmbedding(time.data[0].copy(), phase_emb.data[0].copy(), toolset_emb.data[0].copy())
