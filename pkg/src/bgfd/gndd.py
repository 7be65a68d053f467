"""Gaussian noise domain disturbance.

Each feature map is summarised per image by the mean and population standard
deviation of all its values. During training a noise tensor drawn from that
Gaussian is added to the map, weighted by a schedule that ramps linearly from
0 to ``lam`` over the first ``f_T`` forward passes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .core import Tensor, add
from .errors import ParameterError, ShapeError

TIME_LABELS = ("A", "B")


@dataclass(frozen=True)
class GaussianStats:
    mu: float
    sigma: float
    time_label: str = "A"
    batch_index: int = 0
    scale_index: int = 0


@dataclass
class NoiseSchedule:
    f_t: int = 0
    f_T: int = 1
    lam: float = 1.0

    def __post_init__(self):
        if self.f_T <= 0:
            raise ParameterError(f"f_T must be > 0, got {self.f_T}")
        if self.f_t < 0 or self.lam < 0:
            raise ParameterError("f_t and lam must be >= 0")

    def step(self) -> float:
        """Count one forward pass and return the weight for it."""
        self.f_t += 1
        return noise_weight(self)


def noise_weight(sched: NoiseSchedule) -> float:
    if sched.f_T <= 0:
        raise ParameterError(f"f_T must be > 0, got {sched.f_T}")
    return min(sched.f_t / sched.f_T, 1.0) * sched.lam


def compute_stats(F, t: str = "A", scale: int = 0) -> List[GaussianStats]:
    data = F.data if isinstance(F, Tensor) else np.asarray(F, dtype=np.float64)
    if data.ndim != 4 or data.shape[0] == 0 or data[0].size == 0:
        raise ShapeError(f"compute_stats needs a non-empty (n, c, h, w) map, got {data.shape}")
    flat = data.reshape(data.shape[0], -1)
    mu = flat.mean(axis=1)
    sigma = np.sqrt(((flat - mu[:, None]) ** 2).mean(axis=1))
    return [GaussianStats(float(m), float(s), t, i, scale) for i, (m, s) in enumerate(zip(mu, sigma))]


def sample_noise(stats: GaussianStats, shape, rng: np.random.Generator) -> np.ndarray:
    if stats.sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {stats.sigma}")
    return stats.mu + stats.sigma * rng.standard_normal(shape)


def disturb(F: Tensor, t: str, sched: NoiseSchedule, rng: np.random.Generator, training: bool = True,
            scale: int = 0, weight: float | None = None) -> Tensor:
    """Return ``F + w_noise * Noise`` with per-image noise, or ``F`` itself when
    not training or the weight is zero.

    Noise for image ``i`` is drawn after image ``i - 1`` from the single
    ``rng``; the noise is a constant with respect to gradients. ``weight``
    overrides ``noise_weight(sched)`` (the model passes the value it already
    computed for this forward pass).
    """
    w = noise_weight(sched) if weight is None else weight
    if not training or w == 0.0:
        return F
    noise = np.stack([sample_noise(s, F.shape[1:], rng) for s in compute_stats(F, t, scale)])
    return add(F, w * noise)
