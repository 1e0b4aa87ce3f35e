"""Jitter channel between the watermarking point and the detector.

Jitter is additive on inter-packet delays and zero-mean.  ``scale`` is the
Laplace diversity ``b``, the Gaussian standard deviation, or the uniform
half-width, depending on the family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeding import make_rng

JITTER_FAMILIES = ("laplace", "gaussian", "uniform")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class Density:
    """A zero-mean symmetric density with vectorised ``pdf``/``logpdf``."""

    scale: float

    def logpdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        return np.exp(self.logpdf(x))


@dataclass(frozen=True)
class LaplaceDensity(Density):
    scale: float

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -math.log(2.0 * self.scale) - np.abs(x) / self.scale


@dataclass(frozen=True)
class GaussianDensity(Density):
    scale: float

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = x / self.scale
        return -_LOG_SQRT_2PI - math.log(self.scale) - 0.5 * z * z


@dataclass(frozen=True)
class UniformDensity(Density):
    scale: float  # half-width

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = np.abs(x) <= self.scale
        return np.where(inside, -math.log(2.0 * self.scale), -np.inf)


_DENSITIES = {"laplace": LaplaceDensity, "gaussian": GaussianDensity, "uniform": UniformDensity}


def make_density(dist: str, scale: float) -> Density:
    if dist not in _DENSITIES:
        raise ValueError(f"unknown distribution {dist!r}; expected one of {JITTER_FAMILIES}")
    if not scale > 0:
        raise ValueError("density scale must be positive")
    return _DENSITIES[dist](float(scale))


def sample_noise(rng: np.random.Generator, dist: str, scale: float, n: int) -> np.ndarray:
    """Draw ``n`` zero-mean samples of the named family (shared with traffic-gen)."""
    if dist not in _DENSITIES:
        raise ValueError(f"unknown distribution {dist!r}; expected one of {JITTER_FAMILIES}")
    if scale == 0:
        return np.zeros(n)
    if dist == "laplace":
        return rng.laplace(0.0, scale, n)
    if dist == "gaussian":
        return rng.normal(0.0, scale, n)
    return rng.uniform(-scale, scale, n)


@dataclass(frozen=True)
class JitterModel:
    dist: str = "laplace"
    scale: float = 0.002
    seed: int = 0

    def __post_init__(self):
        if self.dist not in JITTER_FAMILIES:
            raise ValueError(f"unknown jitter family {self.dist!r}; expected one of {JITTER_FAMILIES}")
        if not self.scale >= 0:
            raise ValueError("jitter scale must be >= 0")

    def density(self) -> Density:
        """Density of one jitter sample; undefined for a zero-scale channel."""
        return make_density(self.dist, self.scale)


def sample_jitter(model: JitterModel, n: int) -> np.ndarray:
    """The raw (pre-clipping) jitter realisation ``apply_jitter`` adds."""
    return sample_noise(make_rng(model.seed), model.dist, model.scale, n)


def apply_jitter(ipds, model: JitterModel) -> np.ndarray:
    """``max(0, ipd_i + j_i)`` with ``j_i`` drawn i.i.d. from ``model``."""
    v = np.asarray(ipds, dtype=np.float64)
    if model.scale == 0:
        return v.copy()
    return np.maximum(0.0, v + sample_jitter(model, v.size))


def h0_difference_density(rate: float) -> LaplaceDensity:
    """Density of ``X - Y`` for independent ``X, Y ~ Exponential(rate)``.

    This is Laplace with diversity ``1/rate``: ``f(d) = rate/2 * exp(-rate*|d|)``.
    """
    rate = getattr(rate, "rate", rate)
    if not rate > 0:
        raise ValueError("rate must be positive")
    return LaplaceDensity(1.0 / float(rate))
