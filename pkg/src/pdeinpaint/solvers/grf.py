"""Spectral Gaussian random field sampler, N(0, s^2 (-Laplacian + tau^2)^-alpha) on a periodic grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BadGridSize
from ..fields import Family, FieldVideo


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GrfSpec:
    n: int = 32
    alpha: float = 2.5
    tau: float = 7.0
    amplitude: float = 1.0
    seed: int = 0


def grf_sqrt_spectrum(n: int, alpha: float, tau: float, amplitude: float) -> np.ndarray:
    k = np.fft.fftfreq(n, d=1.0 / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    sigma = amplitude * tau ** (0.5 * (2 * alpha - 2))
    sqrt_eig = n**2 * np.sqrt(2.0) * sigma * (4 * np.pi**2 * (kx**2 + ky**2) + tau**2) ** (-alpha / 2.0)
    sqrt_eig[0, 0] = 0.0
    return sqrt_eig


def sample_grf_array(spec: GrfSpec) -> np.ndarray:
    if not _is_pow2(spec.n):
        raise BadGridSize(f"grid size must be a power of two, got {spec.n}")
    rng = np.random.default_rng(spec.seed)
    coeff = rng.standard_normal((spec.n, spec.n)) + 1j * rng.standard_normal((spec.n, spec.n))
    return np.fft.ifft2(grf_sqrt_spectrum(spec.n, spec.alpha, spec.tau, spec.amplitude) * coeff).real


def sample_grf(spec: GrfSpec, family: Family = Family.NAVIER_STOKES, length: float = 1.0) -> FieldVideo:
    field = sample_grf_array(spec)
    return FieldVideo(field[None, :, :, None], 0.0, length / spec.n, family, spec.seed)
