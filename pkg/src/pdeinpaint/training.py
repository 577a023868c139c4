"""Optimisation loop: random masks, EDM loss, AdamW, checkpoints and resume."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import torch

from .diffusion import DiffusionConfig, edm_loss, sample_training_sigma
from .fields import FieldVideo, TaskSpec
from .masks import MaskRng, mask_for_task, sample_unified_task
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.config import HvditConfig
from .model.hvdit import EDMDenoiser, build_denoiser

log = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "wall_ms", "loss", "val_rel_l2", "lr"]
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 1e-2
    batch_size: int = 16
    steps: int = 2000
    seed: int = 0
    task: Union[TaskSpec, str] = "unified"
    checkpoint_interval: int = 500
    grad_clip: Optional[float] = 1.0
    val_interval: int = 0
    log_interval: int = 10
    dtype: str = "float32"
    wall_clock: bool = True

    def __post_init__(self):
        if self.lr < 0 or self.batch_size < 1 or self.steps < 0:
            raise ValueError("lr >= 0, batch_size >= 1 and steps >= 0 are required")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if isinstance(self.task, dict):
            object.__setattr__(self, "task", TaskSpec.from_json(self.task))
        elif isinstance(self.task, str) and self.task != "unified":
            raise ValueError(f"task must be a TaskSpec or 'unified', got {self.task!r}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["task"] = self.task if isinstance(self.task, str) else self.task.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class RngStreams:
    """Independent data-order, mask and diffusion-noise streams keyed on (seed, step)."""

    seed: int
    mask_counter: int = 0
    _bases: tuple = field(init=False, repr=False)

    def __post_init__(self):
        states = np.random.SeedSequence(self.seed).spawn(3)
        self._bases = tuple(int(s.generate_state(1, np.uint32)[0]) for s in states)

    def data(self, step: int) -> np.random.Generator:
        return np.random.default_rng([self._bases[0], step])

    def masks(self) -> MaskRng:
        return MaskRng(self._bases[1], self.mask_counter)

    def diffusion(self, step: int) -> torch.Generator:
        s = np.random.SeedSequence([self._bases[2], step]).generate_state(2, np.uint32)
        return torch.Generator().manual_seed(int(s[0]) << 32 | int(s[1]))


def make_optimizer(params, cfg: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(
        params, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps, weight_decay=cfg.weight_decay, foreach=False
    )


def optimizer_step(model: torch.nn.Module, optimizer, loss: torch.Tensor, cfg: TrainConfig) -> None:
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if cfg.grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    optimizer.step()


def draw_masks(cfg: TrainConfig, n: int, dims, rng: MaskRng) -> np.ndarray:
    t, h, w, c = dims
    out = np.empty((n, t, h, w), np.float32)
    for i in range(n):
        if cfg.task == "unified":
            out[i] = sample_unified_task(t, h, w, rng, c).mask
        else:
            out[i] = mask_for_task(cfg.task, t, h, w, rng, c).mask
    return out


def train_step(
    denoiser: EDMDenoiser,
    optimizer,
    batch: torch.Tensor,
    masks: torch.Tensor,
    generator: torch.Generator,
    diffusion: DiffusionConfig,
    cfg: TrainConfig,
) -> float:
    """One AdamW update on a [B, T, H, W, C] batch; masks are [B, T, H, W]."""
    m = masks.to(batch.dtype)
    y = batch * m[..., None]
    sigma = sample_training_sigma(batch.shape[0], diffusion, generator, batch.dtype)
    noise = torch.randn(batch.shape, generator=generator, dtype=torch.float64).to(batch.dtype)
    loss = edm_loss(denoiser, batch, y, m, sigma, noise, diffusion.sigma_data)
    optimizer_step(denoiser, optimizer, loss, cfg)
    return float(loss.detach())


def data_scale_for(records: Sequence[FieldVideo], sigma_data: float) -> float:
    std = float(np.std(np.stack([r.data for r in records]).astype(np.float64)))
    return sigma_data / std if std > 0 else 1.0


class Trainer:
    """Holds model, optimiser and rng streams so a run can be checkpointed and resumed."""

    def __init__(self, records, model_cfg: HvditConfig, cfg: TrainConfig, diffusion: DiffusionConfig, data_scale=None):
        if not records:
            raise ValueError("training set is empty")
        self.records = list(records)
        self.cfg = cfg
        self.diffusion = diffusion
        self.dtype = _DTYPES[cfg.dtype]
        self.data = torch.from_numpy(np.stack([r.data for r in self.records])).to(self.dtype)
        self.dims = self.records[0].dims
        self.data_scale = data_scale_for(self.records, diffusion.sigma_data) if data_scale is None else data_scale
        self.model = build_denoiser(model_cfg, diffusion.sigma_data, cfg.seed).to(self.dtype)
        self.optimizer = make_optimizer(self.model.parameters(), cfg)
        self.rng = RngStreams(cfg.seed)
        self.step = 0

    def next_batch(self):
        idx = self.rng.data(self.step).integers(0, len(self.records), self.cfg.batch_size)
        mrng = self.rng.masks()
        masks = draw_masks(self.cfg, self.cfg.batch_size, self.dims, mrng)
        self.rng.mask_counter = mrng.counter
        return self.data[idx] * self.data_scale, torch.from_numpy(masks)

    def train_one(self) -> float:
        batch, masks = self.next_batch()
        loss = train_step(self.model, self.optimizer, batch, masks, self.rng.diffusion(self.step), self.diffusion, self.cfg)
        self.step += 1
        return loss

    def meta(self) -> dict:
        return {
            "step": self.step,
            "data_scale": self.data_scale,
            "dims": list(self.dims),
            "family": self.records[0].family.value,
            "train": self.cfg.to_json(),
            "diffusion": self.diffusion.to_json(),
            "rng": {"seed": self.rng.seed, "mask_counter": self.rng.mask_counter},
        }

    def save(self, path):
        save_checkpoint(path, self.model, self.optimizer, self.meta())

    @classmethod
    def resume(cls, path, records, cfg: Optional[TrainConfig] = None) -> "Trainer":
        model, opt_state, meta = load_checkpoint(path)
        cfg = cfg or TrainConfig.from_json(meta["train"])
        diffusion = DiffusionConfig.from_json(meta["diffusion"])
        tr = cls(records, model.cfg, cfg, diffusion, data_scale=meta["data_scale"])
        tr.model.load_state_dict(model.state_dict())
        if opt_state is not None:
            tr.optimizer.load_state_dict(opt_state)
        tr.step = int(meta["step"])
        tr.rng.mask_counter = int(meta["rng"]["mask_counter"])
        return tr


def fit(
    records,
    model_cfg: HvditConfig,
    cfg: TrainConfig,
    diffusion: DiffusionConfig = DiffusionConfig(),
    out_dir=None,
    val_records=(),
    resume_from=None,
    validate=None,
) -> Trainer:
    """Train for ``cfg.steps`` total steps; writes train_log.csv and checkpoints under out_dir.

    ``validate(trainer) -> float`` supplies the optional val relative-l2 column.
    """
    trainer = Trainer.resume(resume_from, records, cfg) if resume_from else Trainer(records, model_cfg, cfg, diffusion)
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "train_log.csv", "a" if resume_from else "w", newline="")
        writer = csv.writer(fh)
        if not resume_from:
            writer.writerow(LOG_COLUMNS)
    t0 = time.perf_counter()
    try:
        while trainer.step < cfg.steps:
            loss = trainer.train_one()
            step = trainer.step
            val = ""
            if validate is not None and val_records and cfg.val_interval and step % cfg.val_interval == 0:
                val = repr(float(validate(trainer)))
            if writer is not None and (step % cfg.log_interval == 0 or step == cfg.steps or val):
                wall = int((time.perf_counter() - t0) * 1000) if cfg.wall_clock else 0
                writer.writerow([step, wall, repr(loss), val, repr(cfg.lr)])
                fh.flush()
            if step % max(cfg.log_interval * 10, 1) == 0:
                log.info("step %d loss %.5f", step, loss)
            if out is not None and cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0:
                trainer.save(out / f"ckpt_{step:07d}.vpde")
        if out is not None:
            trainer.save(out / "final.vpde")
    finally:
        if writer is not None:
            fh.close()
    return trainer
