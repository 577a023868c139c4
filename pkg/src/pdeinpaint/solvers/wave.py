"""Wave equation in layered media with an exponential sponge.

Solves u_tt = q(c)^2 Laplacian(u) with velocity-Verlet leapfrog on a 5-point stencil.
The sponge lives in a padding band of ``sponge_width`` cells around the stored domain,
with zero Dirichlet values beyond it, so stored frames are never damped directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CflViolation, NonFiniteState
from ..fields import Family, FieldVideo


@dataclass(frozen=True)
class WaveLayerConfig:
    n: int = 32
    layers: tuple[int, int] = (3, 6)
    speed_range: tuple[float, float] = (0.3, 1.0)
    bumps: tuple[int, int] = (2, 6)
    bump_scale: tuple[float, float] = (0.05, 0.15)
    bump_amplitude: tuple[float, float] = (0.5, 1.0)
    sponge_width: int = 8
    sponge_strength: float = 8.0
    dt_solver: float = 0.005
    frames: int = 8
    stride: int = 10
    harmonics: int = 4

    def __post_init__(self):
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ValueError(f"speeds must be positive, got {self.speed_range}")
        if self.layers[0] < 1 or self.layers[0] > self.layers[1]:
            raise ValueError(f"bad layer count range {self.layers}")
        if self.frames < 1 or self.stride < 1 or self.dt_solver <= 0:
            raise ValueError("frames >= 1, stride >= 1 and dt_solver > 0 are required")
        courant = hi * self.dt_solver / self.dx
        if courant >= 1 / np.sqrt(2):
            raise CflViolation(f"CFL number {courant:.3f} >= 1/sqrt(2)")

    @property
    def dx(self) -> float:
        return 1.0 / self.n


def sample_layered_speed(cfg: WaveLayerConfig, seed: int) -> np.ndarray:
    """Piecewise-constant [n, n] speed field of horizontal bands with wavy interfaces."""
    rng = np.random.default_rng([seed, 1])
    n_layers = int(rng.integers(cfg.layers[0], cfg.layers[1] + 1))
    speeds = rng.uniform(*cfg.speed_range, size=n_layers)
    while len(np.unique(speeds)) < n_layers:
        speeds = rng.uniform(*cfg.speed_range, size=n_layers)
    c = (np.arange(cfg.n) + 0.5) * cfg.dx
    if n_layers == 1:
        return np.full((cfg.n, cfg.n), speeds[0])
    k = np.arange(1, n_layers)
    base = (k + rng.uniform(-0.2, 0.2, size=n_layers - 1)) / n_layers
    j = np.arange(1, cfg.harmonics + 1)
    amp = rng.uniform(-1, 1, size=(n_layers - 1, cfg.harmonics)) * (0.1 / (n_layers * cfg.harmonics))
    phase = rng.uniform(0, 2 * np.pi, size=(n_layers - 1, cfg.harmonics))
    # interfaces[k, col]: height of frontier k as a function of c2
    interfaces = base[:, None] + np.einsum("kh,khc->kc", amp, np.sin(2 * np.pi * j[None, :, None] * c[None, None, :] + phase[..., None]))
    interfaces = np.sort(interfaces, axis=0)
    layer = (c[None, :, None] > interfaces[:, None, :]).sum(axis=0)
    return speeds[layer]


def gaussian_bumps(cfg: WaveLayerConfig, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 2])
    count = int(rng.integers(cfg.bumps[0], cfg.bumps[1] + 1))
    c = (np.arange(cfg.n) + 0.5) * cfg.dx
    c1, c2 = np.meshgrid(c, c, indexing="ij")
    u = np.zeros((cfg.n, cfg.n))
    for _ in range(count):
        x0, y0 = rng.uniform(0.1, 0.9, size=2)
        s = rng.uniform(*cfg.bump_scale)
        a = rng.uniform(*cfg.bump_amplitude)
        u += a * np.exp(-((c1 - x0) ** 2 + (c2 - y0) ** 2) / (2 * s**2))
    return u


def laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    p = np.pad(u, 1)
    return (p[2:, 1:-1] + p[:-2, 1:-1] + p[1:-1, 2:] + p[1:-1, :-2] - 4 * u) / dx**2


def sponge_profile(n: int, width: int, strength: float) -> np.ndarray:
    """Damping rate on the padded (n + 2*width)^2 grid, zero on the stored domain."""
    m = n + 2 * width
    if width == 0 or strength == 0:
        return np.zeros((m, m))
    idx = np.arange(m)
    depth = np.maximum(np.maximum(width - idx, idx - (n + width - 1)), 0) / width
    d1, d2 = np.meshgrid(depth, depth, indexing="ij")
    return strength * np.maximum(d1, d2) ** 2


class WaveSolver:
    def __init__(self, cfg: WaveLayerConfig, speed: np.ndarray):
        self.cfg = cfg
        w = cfg.sponge_width
        self.c2 = np.pad(np.asarray(speed, float), w, mode="edge") ** 2
        self.damp = np.exp(-sponge_profile(cfg.n, w, cfg.sponge_strength) * cfg.dt_solver)
        self.has_sponge = bool(np.any(self.damp != 1.0))

    def pad(self, u):
        return np.pad(np.asarray(u, float), self.cfg.sponge_width)

    def crop(self, u):
        w = self.cfg.sponge_width
        return u[w : u.shape[0] - w, w : u.shape[1] - w] if w else u

    def step(self, u, v, dt=None):
        """One kick-drift-kick step; a negative ``dt`` runs the undamped scheme backwards."""
        dt = self.cfg.dt_solver if dt is None else dt
        dx = self.cfg.dx
        v = v + 0.5 * dt * self.c2 * laplacian(u, dx)
        u = u + dt * v
        v = v + 0.5 * dt * self.c2 * laplacian(u, dx)
        if self.has_sponge and dt > 0:
            # damping u_t only; damping u as well acts like a mass term and reflects
            v = v * self.damp
        return u, v

    def energy(self, u, v, region=None):
        dx = self.cfg.dx
        g1 = np.diff(np.pad(u, ((0, 1), (0, 0))), axis=0) / dx
        g2 = np.diff(np.pad(u, ((0, 0), (0, 1))), axis=1) / dx
        dens = 0.5 * v**2 + 0.5 * self.c2 * (g1**2 + g2**2)
        if region is not None:
            dens = dens[region]
        return float(dens.sum() * dx * dx)


def simulate_wave_layer(cfg: WaveLayerConfig, seed: int, u0=None, speed=None):
    """Return (FieldVideo of displacement, speed field [n, n])."""
    speed = sample_layered_speed(cfg, seed) if speed is None else np.asarray(speed, float)
    u0 = gaussian_bumps(cfg, seed) if u0 is None else np.asarray(u0, float)
    if speed.max() * cfg.dt_solver / cfg.dx >= 1 / np.sqrt(2):
        raise CflViolation("speed field violates the CFL bound for this dt_solver")
    solver = WaveSolver(cfg, speed)
    u = solver.pad(u0)
    v = np.zeros_like(u)
    out = np.empty((cfg.frames, cfg.n, cfg.n))
    out[0] = u0
    for f in range(1, cfg.frames):
        for _ in range(cfg.stride):
            u, v = solver.step(u, v)
        if not np.all(np.isfinite(u)):
            raise NonFiniteState(f"wave state blew up at frame {f}")
        out[f] = solver.crop(u)
    video = FieldVideo(out[..., None], cfg.dt_solver * cfg.stride, cfg.dx, Family.WAVE_LAYER, seed)
    return video, speed
