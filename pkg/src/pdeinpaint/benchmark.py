"""Desk-scale overfit benchmark: sparse-sensor reconstruction of a handful of NS videos.

Trains the full model and a no-mask-channel variant on the same data, mask and noise
streams, then scores both on their own training set.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .diffusion import DiffusionConfig
from .evaluation import evaluate_task
from .fields import Family, TaskKind, TaskSpec
from .model.checkpoint import load_checkpoint
from .model.config import HvditConfig
from .solvers.dataset import generate_trajectory
from .training import TrainConfig, fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OverfitSetup:
    trajectories: int = 8
    size: int = 32
    frames: int = 8
    rate: float = 0.03
    steps: int = 20000
    batch_size: int = 16
    data_seed: int = 0
    lr: float = 1e-3
    widths: tuple = (64, 128)
    head_dim: int = 32
    mapping_width: int = 128
    # training noise levels shifted up from the image defaults: with only a few
    # sensors the denoiser must learn to read y at large sigma, which the default
    # log-normal almost never visits
    p_mean: float = 0.5
    p_std: float = 1.5
    checkpoint_interval: int = 2000

    def model(self, conditioning: str = "concat_mask") -> HvditConfig:
        return HvditConfig(
            frames=self.frames,
            size=self.size,
            widths=self.widths,
            head_dim=self.head_dim,
            mapping_width=self.mapping_width,
            conditioning=conditioning,
        )

    def train(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            batch_size=self.batch_size,
            steps=self.steps,
            task=TaskSpec(TaskKind.CONTINUOUS_SENSORS, self.rate),
            checkpoint_interval=self.checkpoint_interval,
            log_interval=50,
            wall_clock=True,
        )


def overfit_records(setup: OverfitSetup):
    return [generate_trajectory(Family.NAVIER_STOKES, setup.data_seed + i, setup.size, setup.frames) for i in range(setup.trajectories)]


def score(checkpoint, records, setup: OverfitSetup) -> dict:
    model, _, meta = load_checkpoint(checkpoint)
    diffusion = DiffusionConfig.from_json(meta["diffusion"])
    rep = evaluate_task(model.eval(), records, TaskSpec(TaskKind.CONTINUOUS_SENSORS, setup.rate), diffusion, data_scale=meta["data_scale"])
    return {"err_all": rep.err_all[0], "err_unobserved": rep.err_unobserved[0], "err_observed": rep.err_observed[0]}


def run_overfit(out_dir, setup: OverfitSetup = OverfitSetup(), variants=("concat_mask", "concat")) -> dict:
    """Train each conditioning variant under ``out_dir/<variant>`` and write results.json."""
    out = Path(out_dir)
    records = overfit_records(setup)
    diffusion = DiffusionConfig(p_mean=setup.p_mean, p_std=setup.p_std)
    results = {"setup": {k: list(v) if isinstance(v, tuple) else v for k, v in setup.__dict__.items()}}
    for variant in variants:
        t0 = time.perf_counter()
        fit(records, setup.model(variant), setup.train(), diffusion, out / variant)
        train_s = time.perf_counter() - t0
        res = score(out / variant / "final.vpde", records, setup)
        res["train_seconds"] = train_s
        results[variant] = res
        log.info("%s: %s", variant, res)
        (out / "results.json").write_text(json.dumps(results, indent=2, sort_keys=True))
    return results


if __name__ == "__main__":
    import argparse

    p = argparse.ArgumentParser(description="overfit benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=OverfitSetup.steps)
    p.add_argument("--lr", type=float, default=OverfitSetup.lr)
    p.add_argument("--p-mean", type=float, default=OverfitSetup.p_mean)
    p.add_argument("--p-std", type=float, default=OverfitSetup.p_std)
    p.add_argument("--variants", nargs="+", default=["concat_mask", "concat"])
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO)
    run_overfit(a.out, replace(OverfitSetup(), steps=a.steps, lr=a.lr, p_mean=a.p_mean, p_std=a.p_std), a.variants)
