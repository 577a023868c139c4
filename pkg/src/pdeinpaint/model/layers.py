"""Transformer building blocks: masked neighborhood attention, modulated blocks, patch merge/split."""

from __future__ import annotations

import math
import warnings

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn


class KernelLargerThanGrid(UserWarning):
    pass


def window_starts(n: int, k: int) -> np.ndarray:
    """First index of the size-min(k, n) window around each position, shifted to stay inside the grid."""
    k = min(k, n)
    return np.clip(np.arange(n) - (k - 1) // 2, 0, n - k), k


def neighborhood_allowed(grid, kernel) -> torch.Tensor:
    """Bool [N, N]: query token i may attend key token j (tokens flattened t-major)."""
    if all(k >= n for k, n in zip(kernel, grid)):
        warnings.warn(f"kernel {tuple(kernel)} covers token grid {tuple(grid)}; attention is global", KernelLargerThanGrid, stacklevel=3)
    allowed = None
    for n, k in zip(grid, kernel):
        start, k = window_starts(n, k)
        j = np.arange(n)
        a = (j[None, :] >= start[:, None]) & (j[None, :] < start[:, None] + k)
        allowed = a if allowed is None else np.einsum("ij,kl->ikjl", allowed, a).reshape(allowed.shape[0] * n, -1)
    return torch.from_numpy(allowed)


class Attention(nn.Module):
    def __init__(self, dim: int, head_dim: int):
        super().__init__()
        self.heads = dim // head_dim
        self.head_dim = head_dim
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x, allowed=None, return_weights=False):
        b, n, d = x.shape
        q, k, v = self.qkv(x).reshape(b, n, 3, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        logits = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        if allowed is not None:
            logits = logits.masked_fill(~allowed, float("-inf"))
        w = logits.softmax(dim=-1)
        out = self.proj((w @ v).transpose(1, 2).reshape(b, n, d))
        return (out, w) if return_weights else out


def modulate(x, shift, scale):
    return x * (1 + scale) + shift


class Block(nn.Module):
    """Pre-norm transformer block with noise-conditioned scale/shift/gate."""

    def __init__(self, dim, head_dim, mapping_width, mlp_ratio=4):
        super().__init__()
        self.attn = Attention(dim, head_dim)
        self.mlp = nn.Sequential(nn.Linear(dim, mlp_ratio * dim), nn.GELU(), nn.Linear(mlp_ratio * dim, dim))
        self.mod = nn.Linear(mapping_width, 6 * dim)
        nn.init.zeros_(self.mod.weight)
        nn.init.zeros_(self.mod.bias)

    def forward(self, x, cond, allowed=None):
        sh1, sc1, g1, sh2, sc2, g2 = self.mod(cond)[:, None, :].chunk(6, dim=-1)
        d = x.shape[-1]
        x = x + g1 * self.attn(modulate(F.rms_norm(x, (d,)), sh1, sc1), allowed)
        return x + g2 * self.mlp(modulate(F.rms_norm(x, (d,)), sh2, sc2))


def merge_rearrange(x, f):
    """[B, t, h, w, D] -> [B, t/ft, h/fh, w/fw, ft*fh*fw*D]."""
    b, t, h, w, d = x.shape
    ft, fh, fw = f
    x = x.reshape(b, t // ft, ft, h // fh, fh, w // fw, fw, d)
    return x.permute(0, 1, 3, 5, 2, 4, 6, 7).reshape(b, t // ft, h // fh, w // fw, ft * fh * fw * d)


def split_rearrange(x, f):
    """Inverse of merge_rearrange."""
    b, t, h, w, dd = x.shape
    ft, fh, fw = f
    d = dd // (ft * fh * fw)
    x = x.reshape(b, t, h, w, ft, fh, fw, d)
    return x.permute(0, 1, 4, 2, 5, 3, 6, 7).reshape(b, t * ft, h * fh, w * fw, d)


class PatchMerge(nn.Module):
    def __init__(self, dim_in, dim_out, factors):
        super().__init__()
        self.factors = tuple(factors)
        self.proj = nn.Linear(int(np.prod(factors)) * dim_in, dim_out)

    def forward(self, x):
        return self.proj(merge_rearrange(x, self.factors))


class PatchSplit(nn.Module):
    def __init__(self, dim_in, dim_out, factors):
        super().__init__()
        self.factors = tuple(factors)
        self.proj = nn.Linear(dim_in, int(np.prod(factors)) * dim_out)

    def forward(self, x):
        return split_rearrange(self.proj(x), self.factors)


class FourierFeatures(nn.Module):
    def __init__(self, dim: int, max_freq: float = 100.0):
        super().__init__()
        half = dim // 2
        self.register_buffer("freqs", torch.exp(torch.linspace(0.0, math.log(max_freq), half)), persistent=False)

    def forward(self, c):
        a = c[:, None] * self.freqs.to(c.dtype)[None, :]
        return torch.cat([torch.cos(a), torch.sin(a)], dim=-1)
