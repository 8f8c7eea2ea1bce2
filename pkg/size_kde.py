"""
Gaussian product-kernel density estimates over object (and room) sizes.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import norm

from constants import BANDWIDTH_FLOOR, SIZE_CLAMP, SIZE_MAX_RETRIES, Emojis
from errors import LearningError
from logger import logger


@dataclass(frozen=True, eq=False)
class SizeKDE:
    samples: np.ndarray      # (n, d) metres
    bandwidths: np.ndarray   # (d,) metres, 0 = point mass along that axis

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        bandwidths = np.asarray(self.bandwidths, dtype=float).reshape(-1)
        if samples.shape[0] < 1:
            raise LearningError("size model needs at least one sample")
        if bandwidths.shape[0] != samples.shape[1]:
            raise LearningError(f"bandwidths {bandwidths.shape[0]} do not match sample dims {samples.shape[1]}")
        if np.any(bandwidths < 0) or not np.all(np.isfinite(samples)):
            raise LearningError("size model bandwidths must be >= 0 and samples finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "bandwidths", bandwidths)

    @property
    def dims(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def density(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        per_dim = np.ones_like(self.samples)
        for d, h in enumerate(self.bandwidths):
            if h > 0:
                per_dim[:, d] = norm.pdf(x[d], loc=self.samples[:, d], scale=h)
            else:
                per_dim[:, d] = np.isclose(self.samples[:, d], x[d], rtol=0.0, atol=1e-12).astype(float)
        return float(per_dim.prod(axis=1).mean())

    def to_dict(self) -> dict:
        return {
            "samples": [[float(v) for v in row] for row in self.samples],
            "bandwidths": [float(h) for h in self.bandwidths],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SizeKDE":
        return cls(samples=np.asarray(data["samples"], dtype=float),
                   bandwidths=np.asarray(data["bandwidths"], dtype=float))


def fit_size_kde(samples, bandwidth_floor: float = BANDWIDTH_FLOOR) -> SizeKDE:
    """Silverman's rule per dimension, h = 1.06 * std * n^(-1/5), floored."""
    arr = np.atleast_2d(np.asarray(samples, dtype=float))
    n = arr.shape[0]
    if n < 1 or arr.size == 0:
        raise LearningError("cannot fit a size model without samples")
    sigma = arr.std(axis=0, ddof=1) if n > 1 else np.zeros(arr.shape[1])
    bandwidths = np.maximum(1.06 * sigma * n ** (-0.2), bandwidth_floor)
    return SizeKDE(samples=arr, bandwidths=bandwidths)


def sample_kde(kde: SizeKDE, rng: np.random.Generator) -> Tuple[float, ...]:
    draw = kde.samples[0]
    for _ in range(SIZE_MAX_RETRIES):
        base = kde.samples[rng.integers(kde.samples.shape[0])]
        draw = base + rng.standard_normal(kde.dims) * kde.bandwidths
        if np.all(draw > 0):
            return tuple(float(v) for v in draw)
    logger.warning(f"{Emojis.WARN} size draw stayed non-positive after {SIZE_MAX_RETRIES} tries, clamping to {SIZE_CLAMP} m")
    return tuple(float(v) for v in np.maximum(draw, SIZE_CLAMP))
