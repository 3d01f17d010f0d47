"""Uniform point sprinkling on the surfaces, with Poisson or fixed counts."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geometry import BOLZA_R, DomainError, Surface, SurfaceKind, in_octagon

MAX_CONSECUTIVE_REJECTIONS = 10**6


class SampleMode(str, enum.Enum):
    POISSON = "PoissonCount"
    FIXED = "FixedCount"

    @classmethod
    def parse(cls, value) -> "SampleMode":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        for mode in cls:
            if key in (mode.value.lower(), mode.name.lower()):
                return mode
        raise ValueError(f"unknown sampling mode {value!r}")


@dataclass(frozen=True)
class SamplerConfig:
    """``rate`` is the intensity per unit volume in Poisson mode and the point
    count (rounded up) in fixed mode."""

    rate: float
    mode: SampleMode = SampleMode.FIXED
    seed: int = 0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "mode", SampleMode.parse(self.mode))


def hyperbolic_radius_icdf(u, R: float = BOLZA_R):
    """Invert the radial CDF of the hyperbolic area measure on the disk of radius ``R``."""
    u = np.asarray(u, dtype=float)
    if not 0.0 < R < 1.0:
        raise DomainError("R must lie in (0, 1)")
    if np.any((u < 0) | (u > 1)):
        raise DomainError("u must lie in [0, 1]")
    t = u * R * R / (1.0 - R * R)
    rho = np.sqrt(t / (1.0 + t))
    return float(rho) if rho.ndim == 0 else rho


def _torus(rng, count):
    return rng.random((count, 2))


def _sphere(rng, count):
    cos_theta = rng.uniform(-1.0, 1.0, count)
    phi = rng.random(count) * (2 * np.pi)
    return np.column_stack([np.arccos(cos_theta), phi])


def _bolza(rng, count):
    out = np.empty((count, 2))
    filled = 0
    rejected_run = 0
    batch = max(64, int(count * 1.3))
    while filled < count:
        rho = hyperbolic_radius_icdf(rng.random(batch))
        theta = rng.random(batch) * (2 * np.pi)
        z = rho * np.exp(1j * theta)
        inside = np.flatnonzero(in_octagon(z))
        if inside.size == 0:
            rejected_run += batch
            if rejected_run >= MAX_CONSECUTIVE_REJECTIONS:
                raise RuntimeError("Bolza rejection sampler stalled")
            continue
        rejected_run = batch - 1 - inside[-1]
        take = z[inside[: count - filled]]
        out[filled : filled + take.size, 0] = take.real
        out[filled : filled + take.size, 1] = take.imag
        filled += take.size
    return out


_SAMPLERS = {SurfaceKind.TORUS: _torus, SurfaceKind.SPHERE: _sphere, SurfaceKind.BOLZA: _bolza}


def sample_count(surface: Surface, config: SamplerConfig, rng: np.random.Generator) -> int:
    if config.mode is SampleMode.FIXED:
        return int(math.ceil(config.rate))
    return int(rng.poisson(config.rate * surface.volume))


def sample_points(surface: Surface, config: SamplerConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw i.i.d. points uniform w.r.t. the surface volume form.

    Returns an ``(N, 2)`` array of chart coordinates. With ``rng=None`` a PCG64
    generator seeded from ``config.seed`` is used.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    count = sample_count(surface, config, rng)
    return _SAMPLERS[surface.kind](rng, count)
