"""Distribution distances in classifier feature space: FID, KID and the Inception Score"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from app.errors import NumericalError, ShapeError, UserInputError

logger = logging.getLogger(__name__)

REGULARIZATION = 1e-6


@dataclass(frozen=True)
class FeatureStatistics:
    """Sample count, mean and covariance of a feature set"""

    count: int
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self) -> None:
        dim = self.mean.shape[0]
        if self.covariance.shape != (dim, dim):
            raise ShapeError("feature mean/covariance", self.mean.shape, self.covariance.shape)
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.covariance))):
            raise NumericalError("feature statistics contain NaN or Inf")

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @classmethod
    def from_features(cls, features: np.ndarray) -> FeatureStatistics:
        """
        Fit the mean and unbiased covariance of ``features`` [N, F].

        FID expects at least F + 1 samples. Fewer only log a warning: the
        covariance is then rank deficient, and the ``1e-6 * I`` added in
        :func:`fid` keeps the distance defined, so small smoke runs can still
        be scored. Fewer than 2 samples raise :class:`UserInputError`.
        """
        if features.ndim != 2 or features.shape[0] < 2:
            raise UserInputError(f"feature statistics need at least 2 samples of shape [N, F], got {features.shape}")
        if features.shape[0] < features.shape[1] + 1:
            logger.warning(
                f"{features.shape[0]} samples for {features.shape[1]} features; the covariance is rank deficient"
            )
        covariance = np.cov(features, rowvar=False, ddof=1).reshape(features.shape[1], features.shape[1])
        return cls(features.shape[0], features.mean(axis=0), (covariance + covariance.T) / 2)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = np.linalg.eigh((matrix + matrix.T) / 2)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def fid(stats_a: FeatureStatistics, stats_b: FeatureStatistics) -> float:
    """
    Frechet distance between two Gaussians fitted to features.

    Both covariances get ``1e-6 * I`` added. The cross term uses
    ``tr((A B)^1/2) = tr((A^1/2 B A^1/2)^1/2)`` so only symmetric
    eigendecompositions are needed.
    """
    if stats_a.dim != stats_b.dim:
        raise ShapeError("fid feature dims", stats_a.mean.shape, stats_b.mean.shape)
    eye = REGULARIZATION * np.eye(stats_a.dim)
    cov_a = stats_a.covariance + eye
    cov_b = stats_b.covariance + eye
    root_a = _psd_sqrt(cov_a)
    cross = np.linalg.eigvalsh((root_a @ cov_b @ root_a + (root_a @ cov_b @ root_a).T) / 2)
    trace_term = np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.sqrt(np.clip(cross, 0.0, None)).sum()
    diff = stats_a.mean - stats_b.mean
    return float(max(diff @ diff + trace_term, 0.0))


def polynomial_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x @ y.T / x.shape[1] + 1.0) ** 3


def mmd2_unbiased(x: np.ndarray, y: np.ndarray) -> float:
    m, n = x.shape[0], y.shape[0]
    k_xx = polynomial_kernel(x, x)
    k_yy = polynomial_kernel(y, y)
    k_xy = polynomial_kernel(x, y)
    within_x = (k_xx.sum() - np.trace(k_xx)) / (m * (m - 1))
    within_y = (k_yy.sum() - np.trace(k_yy)) / (n * (n - 1))
    return float(within_x + within_y - 2.0 * k_xy.mean())


def kid(
    features_a: np.ndarray,
    features_b: np.ndarray,
    rng: np.random.Generator,
    num_subsets: int = 50,
    subset_size: int = 1000,
) -> tuple[float, float]:
    """
    Kernel Inception Distance with the cubic polynomial kernel.

    Returns:
        Mean and standard deviation of the unbiased MMD^2 estimates over
        ``num_subsets`` subsets of ``min(subset_size, n_a, n_b)`` samples
    """
    if features_a.ndim != 2 or features_b.ndim != 2 or features_a.shape[1] != features_b.shape[1]:
        raise ShapeError("kid features", features_a.shape, features_b.shape)
    size = min(subset_size, features_a.shape[0], features_b.shape[0])
    if size < 2:
        raise UserInputError(
            f"KID needs at least 2 samples per side, got {features_a.shape[0]} and {features_b.shape[0]}"
        )
    estimates = [
        mmd2_unbiased(
            features_a[rng.choice(features_a.shape[0], size, replace=False)],
            features_b[rng.choice(features_b.shape[0], size, replace=False)],
        )
        for _ in range(num_subsets)
    ]
    return float(np.mean(estimates)), float(np.std(estimates))


def inception_score(probabilities: np.ndarray, num_splits: int = 10) -> tuple[float, float]:
    """exp(mean KL(p(y|x) || p(y))) per split; returns the mean and deviation over splits"""
    if probabilities.ndim != 2 or probabilities.shape[0] < num_splits or num_splits < 1:
        raise UserInputError(f"inception score needs at least {num_splits} rows, got shape {probabilities.shape}")
    if np.any(probabilities < 0) or not np.allclose(probabilities.sum(axis=1), 1.0, atol=1e-6):
        raise UserInputError("inception score rows must be categorical distributions")
    scores = []
    for part in np.array_split(probabilities, num_splits):
        marginal = part.mean(axis=0, keepdims=True)
        scores.append(np.exp(rel_entr(part, marginal).sum(axis=1).mean()))
    return float(np.mean(scores)), float(np.std(scores))
