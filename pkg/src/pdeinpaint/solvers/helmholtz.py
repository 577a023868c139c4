"""Inhomogeneous Helmholtz on the unit square with zero Dirichlet walls.

The 5-point Laplacian on the n x n interior grid (h = 1/(n+1)) is diagonalised by the
orthonormal type-I sine transform, so the solve is exact up to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dstn

from ..errors import ResonantAlpha
from ..fields import Family, FieldVideo
from .grf import GrfSpec


@dataclass(frozen=True)
class HelmholtzConfig:
    n: int = 32
    alpha: float = 1.0
    source: GrfSpec = field(default_factory=GrfSpec)
    resonance_tol: float = 1e-8

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)


def laplacian_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues of -Laplacian_h on the interior grid, indexed [j-1, k-1]."""
    h = 1.0 / (n + 1)
    mu = 4.0 / h**2 * np.sin(np.arange(1, n + 1) * np.pi * h / 2) ** 2
    return mu[:, None] + mu[None, :]


def sine_mode(n: int, j: int, k: int) -> np.ndarray:
    c = np.arange(1, n + 1) / (n + 1)
    return np.outer(np.sin(j * np.pi * c), np.sin(k * np.pi * c))


def dirichlet_laplacian(u: np.ndarray, h: float) -> np.ndarray:
    p = np.pad(u, 1)
    return (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4 * u) / h**2


def helmholtz_residual(u: np.ndarray, a: np.ndarray, alpha: float) -> float:
    h = 1.0 / (u.shape[0] + 1)
    r = dirichlet_laplacian(u, h) + alpha**2 * u - a
    return float(np.linalg.norm(r) / np.linalg.norm(a))


def solve_helmholtz_array(cfg: HelmholtzConfig, a: np.ndarray) -> np.ndarray:
    """Float64 solution of Laplacian_h(u) + alpha^2 u = a."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (cfg.n, cfg.n):
        raise ValueError(f"source {a.shape} does not match interior grid {cfg.n}")
    symbol = cfg.alpha**2 - laplacian_eigenvalues(cfg.n)
    if np.min(np.abs(symbol)) < cfg.resonance_tol * np.max(np.abs(symbol)):
        raise ResonantAlpha(f"alpha^2 = {cfg.alpha**2} hits a discrete Dirichlet eigenvalue")
    return dstn(dstn(a, type=1, norm="ortho") / symbol, type=1, norm="ortho")


def solve_helmholtz(cfg: HelmholtzConfig, a) -> FieldVideo:
    """Frame 0 holds the source a, frame 1 the solution u."""
    a = np.asarray(a.data[0, :, :, 0] if isinstance(a, FieldVideo) else a, dtype=np.float64)
    u = solve_helmholtz_array(cfg, a)
    return FieldVideo(np.stack([a, u])[..., None], 1.0, cfg.h, Family.HELMHOLTZ)
