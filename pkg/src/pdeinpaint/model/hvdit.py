"""Hierarchical video diffusion transformer and its EDM-preconditioned wrapper."""

from __future__ import annotations

import re

import torch
import torch.nn.functional as F
from torch import nn

from ..diffusion import precond_coefficients
from ..errors import NonFiniteState, ShapeMismatch
from .config import HvditConfig
from .layers import Block, FourierFeatures, PatchMerge, PatchSplit, modulate, neighborhood_allowed


def patchify(x, patch):
    """[B, T, H, W, C] -> [B, T/pt, H/ph, W/pw, pt*ph*pw*C]."""
    b, t, h, w, c = x.shape
    pt, ph, pw = patch
    x = x.reshape(b, t // pt, pt, h // ph, ph, w // pw, pw, c)
    return x.permute(0, 1, 3, 5, 2, 4, 6, 7).reshape(b, t // pt, h // ph, w // pw, pt * ph * pw * c)


def unpatchify(tokens, patch, channels):
    b, tt, th, tw, _ = tokens.shape
    pt, ph, pw = patch
    x = tokens.reshape(b, tt, th, tw, pt, ph, pw, channels)
    return x.permute(0, 1, 4, 2, 5, 3, 6, 7).reshape(b, tt * pt, th * ph, tw * pw, channels)


class Level(nn.Module):
    def __init__(self, cfg: HvditConfig, level: int):
        super().__init__()
        d = cfg.widths[level]
        grid = cfg.level_grids()[level]
        self.grid = grid
        self.bottleneck = level == cfg.levels - 1
        self.pos = nn.Parameter(torch.randn(*grid, d) * 0.02)
        blk = lambda: Block(d, cfg.head_dim, cfg.mapping_width, cfg.mlp_ratio)  # noqa: E731
        if self.bottleneck:
            self.enc = nn.ModuleList(blk() for _ in range(cfg.global_depth))
            self.register_buffer("allowed", None, persistent=False)
        else:
            self.enc = nn.ModuleList(blk() for _ in range(cfg.depths[level]))
            self.dec = nn.ModuleList(blk() for _ in range(cfg.depths[level]))
            f = cfg.merge_factors()[level]
            self.merge = PatchMerge(d, cfg.widths[level + 1], f)
            self.split = PatchSplit(cfg.widths[level + 1], d, f)
            self.skip = nn.Linear(d, d)
            self.register_buffer("allowed", neighborhood_allowed(grid, cfg.kernel), persistent=False)

    def run(self, blocks, x, cond):
        b, t, h, w, d = x.shape
        flat = x.reshape(b, t * h * w, d)
        for block in blocks:
            flat = block(flat, cond, self.allowed)
        return flat.reshape(b, t, h, w, d)


class HVDiT(nn.Module):
    """Raw network F(c_in * x_t, y, m, c_noise) on [B, T, H, W, C] videos."""

    def __init__(self, cfg: HvditConfig):
        super().__init__()
        self.cfg = cfg
        mw = cfg.mapping_width
        self.embed = nn.Linear(cfg.patch_volume * cfg.in_channels, cfg.widths[0])
        self.fourier = FourierFeatures(mw)
        self.mapping = nn.ModuleList(nn.Linear(mw, mw) for _ in range(cfg.mapping_depth))
        self.levels = nn.ModuleList(Level(cfg, lvl) for lvl in range(cfg.levels))
        self.out_mod = nn.Linear(mw, 2 * cfg.widths[0])
        self.head = nn.Linear(cfg.widths[0], cfg.patch_volume * cfg.channels)
        for lin in (self.out_mod, self.head):
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)

    def tokenize(self, x, y, m):
        """Per-pixel channel stack of (x, y, m), patchified and embedded to widths[0]."""
        cfg = self.cfg
        if x.shape[1:] != (cfg.frames, cfg.size, cfg.size, cfg.channels):
            raise ShapeMismatch(f"expected [B,{cfg.frames},{cfg.size},{cfg.size},{cfg.channels}], got {tuple(x.shape)}")
        m = m.reshape(*m.shape[:4], 1).to(x.dtype)
        if cfg.conditioning == "concat_mask":
            inp = torch.cat([x, y, m], dim=-1)
        elif cfg.conditioning == "concat":
            inp = torch.cat([x, y], dim=-1)
        else:
            inp = x * (1 - m) + y * m
        return self.embed(patchify(inp, cfg.patch))

    def noise_embedding(self, c_noise):
        cond = self.fourier(c_noise)
        for lin in self.mapping:
            cond = F.silu(lin(cond))
        return cond

    def forward(self, x, y, m, c_noise):
        cond = self.noise_embedding(c_noise)
        h = self.tokenize(x, y, m)
        skips = []
        for level in self.levels:
            h = level.run(level.enc, h + level.pos, cond)
            if not level.bottleneck:
                skips.append(h)
                h = level.merge(h)
        for level in reversed(self.levels[:-1]):
            h = level.split(h) + level.skip(skips.pop())
            h = level.run(level.dec, h, cond)
        shift, scale = self.out_mod(cond)[:, None, None, None, :].chunk(2, dim=-1)
        h = modulate(F.rms_norm(h, (h.shape[-1],)), shift, scale)
        return unpatchify(self.head(h), self.cfg.patch, self.cfg.channels)

    def param_levels(self) -> dict[str, int]:
        """Hierarchy level of each parameter; -1 for shared embedding/mapping/head tensors."""
        out = {}
        for name, _ in self.named_parameters():
            hit = re.search(r"levels\.(\d+)\.", name)
            out[name] = int(hit.group(1)) if hit else -1
        return out


class EDMDenoiser(nn.Module):
    """D(x; sigma) = c_skip x + c_out F(c_in x, y, m, c_noise); y and m bypass the preconditioning."""

    def __init__(self, net: nn.Module, sigma_data: float = 0.5):
        super().__init__()
        self.net = net
        self.sigma_data = sigma_data

    @property
    def cfg(self) -> HvditConfig:
        return self.net.cfg

    def forward(self, x, y, m, sigma):
        sigma = torch.as_tensor(sigma, dtype=x.dtype).reshape(-1)
        if sigma.numel() == 1 and x.shape[0] > 1:
            sigma = sigma.expand(x.shape[0])
        c_skip, c_out, c_in, c_noise = precond_coefficients(sigma, self.sigma_data)
        b = (-1,) + (1,) * (x.ndim - 1)
        out = c_skip.reshape(b) * x + c_out.reshape(b) * self.net(c_in.reshape(b) * x, y, m, c_noise)
        if not torch.all(torch.isfinite(out)):
            raise NonFiniteState("denoiser produced non-finite output")
        return out

    def param_levels(self) -> dict[str, int]:
        return {f"net.{k}": v for k, v in self.net.param_levels().items()}


def build_denoiser(cfg: HvditConfig, sigma_data: float = 0.5, seed: int = 0) -> EDMDenoiser:
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return EDMDenoiser(HVDiT(cfg), sigma_data)
