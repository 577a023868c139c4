"""Finite-difference verification of reverse-mode parameter gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np
import torch


def grad_check(model: torch.nn.Module, loss_fn: Callable[[], torch.Tensor], probes: int = 64, h: float = 1e-4, seed: int = 0, floor: float = 1e-7) -> float:
    """Max relative error between autograd and central differences at ``probes`` random scalars.

    ``loss_fn`` recomputes the scalar loss from the model's current parameters. The
    relative error of one probe is |g - g_fd| / max(|g|, |g_fd|, floor).
    """
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad(set_to_none=True)
    loss_fn().backward()
    grads = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    sizes = np.array([p.numel() for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    picks = rng.choice(offsets[-1], size=min(probes, int(offsets[-1])), replace=False)
    worst = 0.0
    with torch.no_grad():
        for flat in picks:
            i = int(np.searchsorted(offsets, flat, side="right") - 1)
            j = int(flat - offsets[i])
            view = params[i].view(-1)
            orig = view[j].item()
            view[j] = orig + h
            plus = loss_fn().item()
            view[j] = orig - h
            minus = loss_fn().item()
            view[j] = orig
            fd = (plus - minus) / (2 * h)
            g = grads[i].view(-1)[j].item()
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), floor))
    return worst
