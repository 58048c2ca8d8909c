"""Synthetic similarity data: model draws and planted-community instances.

sample_generative follows the model's own generative story (Gamma
precisions, half-normal factors, Poisson counts at rate WH) and is useful
for calibration checks.  sample_planted bypasses the priors and plants
Poisson rates directly from known community labels, giving recovery tests
a sharp ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SimilarityMatrix
from .errors import DataValidationError
from .model import FactorModel, Hyperparameters


def _ids(n: int) -> tuple[str, ...]:
    return tuple(f"n{i:04d}" for i in range(n))


def _symmetric_poisson(rng: np.random.Generator, rates: np.ndarray) -> np.ndarray:
    """Draw only i <= j and mirror, so the result is exactly symmetric."""
    n = rates.shape[0]
    draws = rng.poisson(rates)
    upper = np.triu(draws)
    return upper + np.triu(upper, k=1).T


@dataclass(frozen=True)
class PlantedSpec:
    """Parameters of a planted-partition instance.

    Same-community pairs (including the diagonal) get Poisson counts at
    within_rate, cross-community pairs at between_rate, which must be
    strictly smaller.
    """

    n: int
    k: int
    sizes: tuple[int, ...]
    within_rate: float
    between_rate: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.n < 1 or self.k < 1:
            raise DataValidationError("n and k must be at least 1")
        if len(self.sizes) != self.k:
            raise DataValidationError(f"{len(self.sizes)} sizes for k={self.k}")
        if any(s < 1 for s in self.sizes):
            raise DataValidationError("community sizes must be at least 1")
        if sum(self.sizes) != self.n:
            raise DataValidationError(
                f"sizes sum to {sum(self.sizes)}, expected n={self.n}")
        if not (self.within_rate > self.between_rate >= 0.0):
            raise DataValidationError(
                "need within_rate > between_rate >= 0")


def sample_planted(spec: PlantedSpec) -> tuple[np.ndarray, SimilarityMatrix]:
    """Draw a symmetric count matrix with planted community structure.

    Returns the per-learner community labels and the matrix.
    """
    rng = np.random.default_rng(spec.seed % (1 << 128))
    labels = np.repeat(np.arange(spec.k), spec.sizes)
    same = labels[:, None] == labels[None, :]
    rates = np.where(same, spec.within_rate, spec.between_rate)
    x = _symmetric_poisson(rng, rates)
    return labels, SimilarityMatrix(x, _ids(spec.n))


def sample_generative(n: int, k: int, hp: Hyperparameters,
                      seed: int) -> tuple[FactorModel, SimilarityMatrix]:
    """Draw (W, H, beta) from the priors and counts from Poisson(WH).

    beta_k ~ Gamma(shape a, rate b); factor entries are half-normal with
    precision beta_k; the count matrix is symmetrised by drawing i <= j
    and mirroring.
    """
    if n < 1 or k < 1:
        raise DataValidationError("n and k must be at least 1")
    rng = np.random.default_rng(seed % (1 << 128))
    beta = rng.gamma(shape=hp.a, scale=1.0 / hp.b, size=k)
    sd = 1.0 / np.sqrt(beta)
    w = np.abs(rng.normal(0.0, 1.0, size=(n, k))) * sd[None, :]
    h = np.abs(rng.normal(0.0, 1.0, size=(k, n))) * sd[:, None]
    model = FactorModel(w, h, beta)
    x = _symmetric_poisson(rng, model.rates())
    return model, SimilarityMatrix(x, _ids(n))
