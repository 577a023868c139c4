"""EDM noise schedule, preconditioning, denoising loss and the Heun probability-flow sampler."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import torch

from .errors import NonFiniteLoss, NonFiniteState, ZeroSigma

# denoiser(x_t, y, m, sigma[B]) -> clean estimate shaped like x_t
Denoiser = Callable[[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class DiffusionConfig:
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    sigma_data: float = 0.5
    p_mean: float = -1.2
    p_std: float = 1.2
    num_steps: int = 32

    def __post_init__(self):
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError(f"need 0 < sigma_min < sigma_max, got {self.sigma_min}, {self.sigma_max}")
        if self.rho <= 0 or self.num_steps < 1:
            raise ValueError("rho > 0 and num_steps >= 1 are required")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "DiffusionConfig":
        return cls(**d)


def karras_sigma_steps(cfg: DiffusionConfig) -> np.ndarray:
    """num_steps decreasing noise levels from sigma_max to sigma_min, then a trailing 0."""
    n = cfg.num_steps
    if n == 1:
        return np.array([cfg.sigma_max, 0.0])
    lo, hi = cfg.sigma_min ** (1 / cfg.rho), cfg.sigma_max ** (1 / cfg.rho)
    i = np.arange(n)
    sig = (hi + i / (n - 1) * (lo - hi)) ** cfg.rho
    sig[0], sig[-1] = cfg.sigma_max, cfg.sigma_min
    return np.append(sig, 0.0)


def precond_coefficients(sigma, sigma_data: float):
    """(c_skip, c_out, c_in, c_noise) of EDM preconditioning."""
    s2, d2 = sigma**2, sigma_data**2
    c_skip = d2 / (s2 + d2)
    c_out = sigma * sigma_data / (s2 + d2) ** 0.5
    c_in = 1 / (s2 + d2) ** 0.5
    c_noise = torch.log(sigma) / 4 if torch.is_tensor(sigma) else np.log(sigma) / 4
    return c_skip, c_out, c_in, c_noise


def loss_weight(sigma, sigma_data: float):
    return (sigma**2 + sigma_data**2) / (sigma * sigma_data) ** 2


def _bcast(v: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    return v.reshape(-1, *([1] * (like.ndim - 1)))


def sample_training_sigma(batch: int, cfg: DiffusionConfig, generator: torch.Generator, dtype=torch.float32):
    z = torch.randn(batch, generator=generator, dtype=torch.float64)
    return torch.exp(cfg.p_mean + cfg.p_std * z).to(dtype)


def edm_loss(
    denoiser: Denoiser,
    x0: torch.Tensor,
    y: torch.Tensor,
    m: torch.Tensor,
    sigma,
    noise: torch.Tensor,
    sigma_data: float = 0.5,
    reduction: str = "mean",
) -> torch.Tensor:
    """lambda(sigma) * mean((D(x0 + sigma*eps, y, m; sigma) - x0)^2) per sample, then averaged."""
    sigma = torch.as_tensor(sigma, dtype=x0.dtype)
    if sigma.ndim == 0:
        sigma = sigma.expand(x0.shape[0])
    if torch.any(sigma <= 0):
        raise ZeroSigma("training noise levels must be positive")
    x_t = x0 + _bcast(sigma, x0) * noise
    err = (denoiser(x_t, y, m, sigma) - x0) ** 2
    per_sample = loss_weight(sigma, sigma_data) * err.reshape(err.shape[0], -1).mean(dim=1)
    bad = ~torch.isfinite(per_sample)
    if torch.any(bad):
        i = int(torch.nonzero(bad)[0])
        raise NonFiniteLoss(f"non-finite loss for sample {i} at sigma={float(sigma[i]):.4g}", float(sigma[i]), i)
    return per_sample if reduction == "none" else per_sample.mean()


def score_from_denoiser(d_out, x_t, sigma):
    """Score (D - x) / sigma^2."""
    if torch.is_tensor(sigma):
        if torch.any(sigma == 0):
            raise ZeroSigma("score is undefined at sigma = 0")
        s = _bcast(sigma, x_t) if sigma.ndim else sigma
    else:
        if sigma == 0:
            raise ZeroSigma("score is undefined at sigma = 0")
        s = sigma
    return (d_out - x_t) / s**2


@torch.no_grad()
def heun_sample(
    denoiser: Denoiser,
    y: torch.Tensor,
    m: torch.Tensor,
    cfg: DiffusionConfig,
    seed: int = 0,
    shape: Optional[tuple] = None,
    generator: Optional[torch.Generator] = None,
    noise: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Integrate dx/dsigma = (x - D(x; sigma)) / sigma from sigma_max to 0.

    Heun steps between consecutive noise levels, Euler on the last step to zero.
    ``noise`` overrides the unit Gaussian start drawn from ``seed``/``generator``.
    """
    shape = tuple(y.shape) if shape is None else tuple(shape)
    if noise is None:
        if generator is None:
            generator = torch.Generator().manual_seed(int(seed))
        noise = torch.randn(shape, generator=generator, dtype=torch.float64)
    sigmas = karras_sigma_steps(cfg)
    x = noise.to(y.dtype) * sigmas[0]
    ones = torch.ones(shape[0], dtype=y.dtype)
    for s_cur, s_next in zip(sigmas[:-1], sigmas[1:]):
        d_cur = (x - denoiser(x, y, m, ones * s_cur)) / s_cur
        x_next = x + (s_next - s_cur) * d_cur
        if s_next > 0:
            d_next = (x_next - denoiser(x_next, y, m, ones * s_next)) / s_next
            x_next = x + (s_next - s_cur) * 0.5 * (d_cur + d_next)
        x = x_next
        if not torch.all(torch.isfinite(x)):
            raise NonFiniteState(f"sampler diverged at sigma={s_next:.4g}")
    return x
