"""Forward diffusion, the simplified objective and the DDPM/DDIM samplers"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Protocol

import numpy as np
from tqdm import tqdm

from app.autodiff import Tensor
from app.autodiff import functional as F
from app.conditions.labels import ConditionBatch
from app.diffusion.guidance import GuidanceConfig, cfg_combine
from app.diffusion.schedule import VarianceSchedule, subsequence
from app.errors import ShapeError, UserInputError

logger = logging.getLogger(__name__)


class SamplerKind(str, Enum):
    """Reverse process used for generation"""

    DDPM = "ddpm"
    DDIM = "ddim"


class NoisePredictor(Protocol):
    def predict_noise(
        self, x: np.ndarray, steps: np.ndarray, conditions: ConditionBatch | None
    ) -> np.ndarray: ...


class TrainableDenoiser(Protocol):
    def forward(self, x: Tensor | np.ndarray, steps: np.ndarray, conditions: ConditionBatch | None) -> Tensor: ...


def _per_sample(values: np.ndarray, ndim: int) -> np.ndarray:
    """Reshape per-sample coefficients so they broadcast over trailing axes"""
    values = np.asarray(values, dtype=np.float64)
    return values.reshape(values.shape + (1,) * (ndim - values.ndim)) if values.ndim else values


def guided_noise(
    denoiser: NoisePredictor,
    x: np.ndarray,
    steps: np.ndarray,
    conditions: ConditionBatch | None,
    weight: float,
) -> np.ndarray:
    """
    Guided noise estimate for one reverse step.

    With ``weight == 0`` or no condition the network is queried once;
    otherwise the conditional and null rows go through in one doubled batch.
    """
    if conditions is None or weight == 0.0:
        return denoiser.predict_noise(x, steps, conditions)
    count = x.shape[0]
    both = denoiser.predict_noise(
        np.concatenate([x, x]),
        np.concatenate([steps, steps]),
        conditions.concat(ConditionBatch.null(count, conditions.num_tools)),
    )
    return cfg_combine(both[:count], both[count:], weight)


class DiffusionProcess:
    """
    Gaussian diffusion over images of a fixed shape.

    Steps are 1-based. Sampling draws noise from a generator seeded with
    ``(seed, chunk index)``, so results do not depend on the worker count.
    """

    def __init__(self, schedule: VarianceSchedule, image_shape: tuple[int, ...]) -> None:
        self.schedule = schedule
        self.image_shape = tuple(image_shape)

    @property
    def num_steps(self) -> int:
        return self.schedule.num_steps

    def forward_diffuse(self, x0: np.ndarray, t: int | np.ndarray, noise: np.ndarray) -> np.ndarray:
        """``x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise``"""
        if x0.shape != noise.shape:
            raise ShapeError("forward_diffuse x0/noise", x0.shape, noise.shape)
        self.schedule.check_step(t)
        alpha_bar = _per_sample(self.schedule.alpha_bar(t), x0.ndim)
        return np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * noise

    def predict_x0(self, x_t: np.ndarray, t: int | np.ndarray, noise: np.ndarray) -> np.ndarray:
        """Invert :meth:`forward_diffuse` for a given noise estimate"""
        alpha_bar = _per_sample(self.schedule.alpha_bar(t), x_t.ndim)
        return (x_t - np.sqrt(1.0 - alpha_bar) * noise) / np.sqrt(alpha_bar)

    def training_loss(
        self,
        denoiser: TrainableDenoiser,
        x0: np.ndarray,
        conditions: ConditionBatch | None,
        rng: np.random.Generator,
    ) -> Tensor:
        """
        Simplified objective: mean squared error between the drawn noise and
        the prediction, averaged over every element of the batch.

        ``t`` is uniform in ``[1, T]`` per image and the noise is standard
        normal per element; condition dropout is applied by the caller.
        """
        steps = rng.integers(1, self.num_steps + 1, size=x0.shape[0])
        noise = rng.standard_normal(x0.shape)
        x_t = self.forward_diffuse(x0, steps, noise).astype(x0.dtype, copy=False)
        prediction = denoiser.forward(x_t, steps, conditions)
        return F.mean_squared_error(prediction, noise.astype(prediction.dtype, copy=False))

    def ddpm_step(
        self,
        denoiser: NoisePredictor,
        x_t: np.ndarray,
        t: int,
        conditions: ConditionBatch | None,
        guidance: GuidanceConfig,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Ancestral step with sigma_t^2 = beta_t; no noise is added at t = 1"""
        self.schedule.check_step(t)
        steps = np.full(x_t.shape[0], t)
        eps = guided_noise(denoiser, x_t, steps, conditions, guidance.weight)
        beta = float(self.schedule.beta(t))
        alpha_bar = float(self.schedule.alpha_bar(t))
        mean = (x_t - beta / np.sqrt(1.0 - alpha_bar) * eps) / np.sqrt(1.0 - beta)
        if t > 1:
            mean = mean + np.sqrt(beta) * rng.standard_normal(x_t.shape)
        return mean

    def ddim_step(
        self,
        denoiser: NoisePredictor,
        x_t: np.ndarray,
        t: int,
        t_prev: int,
        conditions: ConditionBatch | None,
        guidance: GuidanceConfig,
    ) -> np.ndarray:
        """Deterministic (eta = 0) jump from step ``t`` to ``t_prev``; ``t_prev = 0`` returns x0"""
        if not 0 <= t_prev < t:
            raise UserInputError(f"DDIM needs 0 <= t_prev < t, got t={t}, t_prev={t_prev}")
        self.schedule.check_step(t)
        steps = np.full(x_t.shape[0], t)
        eps = guided_noise(denoiser, x_t, steps, conditions, guidance.weight)
        x0 = self.predict_x0(x_t, t, eps)
        alpha_bar_prev = float(self.schedule.alpha_bar(t_prev))
        return np.sqrt(alpha_bar_prev) * x0 + np.sqrt(1.0 - alpha_bar_prev) * eps

    def _sample_chunk(
        self,
        denoiser: NoisePredictor,
        count: int,
        conditions: ConditionBatch | None,
        timesteps: list[int],
        sampler: SamplerKind,
        guidance: GuidanceConfig,
        rng: np.random.Generator,
    ) -> np.ndarray:
        x = rng.standard_normal((count, *self.image_shape))
        if sampler == SamplerKind.DDPM:
            for t in reversed(timesteps):
                x = self.ddpm_step(denoiser, x, t, conditions, guidance, rng)
        else:
            previous = [0, *timesteps[:-1]]
            for t, t_prev in zip(reversed(timesteps), reversed(previous)):
                x = self.ddim_step(denoiser, x, t, t_prev, conditions, guidance)
        return np.clip(x, -1.0, 1.0)

    def sample(
        self,
        denoiser: NoisePredictor,
        num_images: int,
        conditions: ConditionBatch | None = None,
        num_inference_steps: int | None = None,
        guidance_weight: float = 0.0,
        sampler: SamplerKind = SamplerKind.DDIM,
        seed: int = 0,
        batch_size: int = 64,
        num_workers: int = 1,
        show_progress: bool = False,
    ) -> np.ndarray:
        """
        Generate images starting from x_T ~ N(0, I).

        Args:
            denoiser: Network queried for noise estimates
            num_images: Number of images
            conditions: One condition per image, or ``None`` for unconditional samples
            num_inference_steps: DDIM subsequence length S (DDPM always runs all T steps)
            guidance_weight: CFG weight w
            sampler: DDPM or DDIM
            seed: Seed of the per-chunk generators
            batch_size: Images per chunk
            num_workers: Threads sampling chunks concurrently
            show_progress: Show a progress bar over chunks

        Returns:
            Images ``[num_images, *image_shape]`` clamped to [-1, 1]
        """
        if conditions is not None and len(conditions) != num_images:
            raise ShapeError("conditions per image", (len(conditions),), (num_images,))
        timesteps = subsequence(self.schedule, num_inference_steps or self.num_steps)
        if sampler == SamplerKind.DDPM:
            timesteps = list(range(1, self.num_steps + 1))
        guidance = GuidanceConfig(weight=guidance_weight, dropout_probability=0.0)
        starts = list(range(0, num_images, batch_size))

        def run(index: int) -> np.ndarray:
            start = starts[index]
            stop = min(start + batch_size, num_images)
            chunk_conditions = None if conditions is None else conditions.take(slice(start, stop))
            rng = np.random.default_rng([seed, index])
            return self._sample_chunk(denoiser, stop - start, chunk_conditions, timesteps, sampler, guidance, rng)

        logger.info(
            f"Sampling {num_images} images with {sampler.value} over {len(timesteps)} steps, w={guidance_weight}"
        )
        if num_workers > 1:
            with ThreadPoolExecutor(max_workers=num_workers) as pool:
                chunks = list(tqdm(pool.map(run, range(len(starts))), total=len(starts), disable=not show_progress))
        else:
            chunks = [run(i) for i in tqdm(range(len(starts)), disable=not show_progress)]
        if not chunks:
            return np.zeros((0, *self.image_shape))
        return np.concatenate(chunks)
