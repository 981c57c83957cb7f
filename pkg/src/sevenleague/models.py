"""Scalar SDE models and the Ornstein-Uhlenbeck transition law.

The OU process ``dY = -lambda (Y - Ybar) dt + sigma dW`` has a Gaussian
transition density, so its conditional stochastic collocation points are
known in closed form. That closed form is the oracle the learned pipeline
is validated against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ModelParams",
    "SdeModel",
    "ConditionalMoments",
    "ou_drift",
    "ou_diffusion",
    "ou_model",
    "ou_conditional_moments",
    "ou_exact_sample",
    "ou_exact_collocation",
    "SMALL_RATE_THRESHOLD",
]

# lambda*dt below this switches the variance factor to its Taylor series
SMALL_RATE_THRESHOLD = 1e-6


@dataclass(frozen=True)
class ModelParams:
    """OU parameter set: long-term mean, reversion speed and volatility."""

    mean_level: float = 0.0
    reversion_speed: float = 1.0
    volatility: float = 0.5

    def __post_init__(self):
        for name in ("mean_level", "reversion_speed", "volatility"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.reversion_speed < 0:
            raise ValueError(f"reversion_speed must be >= 0, got {self.reversion_speed}")
        if self.volatility < 0:
            raise ValueError(f"volatility must be >= 0, got {self.volatility}")

    def as_features(self) -> tuple[float, float, float]:
        return (self.mean_level, self.reversion_speed, self.volatility)


@dataclass(frozen=True)
class SdeModel:
    """Generic scalar Ito SDE ``dY = a(t, Y, theta) dt + b(t, Y, theta) dW``.

    ``drift`` and ``diffusion`` must be pure and accept numpy arrays for ``y``
    so that whole path batches can be stepped at once.
    """

    drift: Callable
    diffusion: Callable
    initial_value: float
    name: str = "custom"


@dataclass(frozen=True)
class ConditionalMoments:
    mean: np.ndarray | float
    std: np.ndarray | float


def ou_drift(t, y, theta: ModelParams):
    return -theta.reversion_speed * (y - theta.mean_level)


def ou_diffusion(t, y, theta: ModelParams):
    # additive noise
    if np.ndim(y):
        return np.full(np.shape(y), theta.volatility)
    return float(theta.volatility)


def ou_model(initial_value: float = 1.0) -> SdeModel:
    return SdeModel(ou_drift, ou_diffusion, float(initial_value), name="ou")


def _variance_factor(rate: float, dt: float) -> float:
    """(1 - exp(-2 rate dt)) / (2 rate), finite as rate -> 0."""
    u = rate * dt
    if u < SMALL_RATE_THRESHOLD:
        return dt * (1.0 - u + (2.0 / 3.0) * u * u)
    return -math.expm1(-2.0 * u) / (2.0 * rate)


def ou_conditional_moments(y0, dt: float, theta: ModelParams) -> ConditionalMoments:
    """Mean and standard deviation of ``Y(t + dt)`` given ``Y(t) = y0``."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt!r}")
    decay = math.exp(-theta.reversion_speed * dt)
    mean = y0 * decay + theta.mean_level * -math.expm1(-theta.reversion_speed * dt)
    std = theta.volatility * math.sqrt(_variance_factor(theta.reversion_speed, dt))
    return ConditionalMoments(mean=mean, std=std)


def ou_exact_sample(y0, t: float, theta: ModelParams, x):
    """Exact OU transition driven by the standard normal draw ``x``."""
    moments = ou_conditional_moments(y0, t, theta)
    return moments.mean + moments.std * x


def ou_exact_collocation(y0, dt: float, theta: ModelParams, grid) -> np.ndarray:
    """Conditional collocation points ``mean + std * x_j``.

    For scalar ``y0`` returns shape ``(m,)``; for an array of states returns
    ``(len(y0), m)``.
    """
    nodes = np.asarray(grid.nodes, dtype=float)
    if nodes.size == 0:
        raise ValueError("collocation grid is empty")
    moments = ou_conditional_moments(np.asarray(y0, dtype=float), dt, theta)
    mean = np.asarray(moments.mean, dtype=float)
    return mean[..., None] + moments.std * nodes
