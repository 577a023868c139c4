import csv

import numpy as np
import pytest
import torch

from pdeinpaint.diffusion import DiffusionConfig, edm_loss
from pdeinpaint.fields import Family, FieldVideo, TaskKind, TaskSpec
from pdeinpaint.model import HvditConfig
from pdeinpaint.model.checkpoint import load_checkpoint
from pdeinpaint.training import LOG_COLUMNS, RngStreams, TrainConfig, Trainer, fit, make_optimizer, optimizer_step

MODEL = HvditConfig(frames=4, size=8, patch=(1, 2, 2), widths=(16, 32), depths=(1,), global_depth=1, head_dim=8, kernel=(2, 3, 3), mapping_width=16)


def records(n=4, seed=0):
    rng = np.random.default_rng(seed)
    return [FieldVideo(rng.standard_normal((4, 8, 8, 1)).astype(np.float32), 0.05, 1 / 8, Family.NAVIER_STOKES, i) for i in range(n)]


def small_cfg(**kw):
    base = dict(batch_size=4, steps=6, seed=3, checkpoint_interval=3, log_interval=1, wall_clock=False)
    base.update(kw)
    return TrainConfig(**base)


# ---------------------------------------------------------------- config


def test_train_config_validation_and_json():
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    with pytest.raises(ValueError):
        TrainConfig(beta1=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    cfg = TrainConfig(task=TaskSpec(TaskKind.CONTINUOUS_SENSORS, 0.03))
    assert TrainConfig.from_json(cfg.to_json()) == cfg
    assert TrainConfig.from_json(TrainConfig().to_json()) == TrainConfig()


# ---------------------------------------------------------------- optimiser


def hand_adamw(theta, grad_fn, steps, lr, b1, b2, eps, wd):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        theta = theta * (1 - lr * wd)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
        out.append(theta.copy())
    return out


def test_adamw_matches_hand_reference():
    a = np.array([1.0, 3.0, 0.5])
    target = np.array([0.2, -1.0, 2.0])
    theta0 = np.array([1.5, 0.3, -0.7])
    cfg = TrainConfig(lr=0.05, grad_clip=None)
    ref = hand_adamw(theta0, lambda th: a * (th - target), 10, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    p = torch.nn.Parameter(torch.tensor(theta0))
    opt = make_optimizer([p], cfg)
    for k in range(10):
        loss = 0.5 * (torch.tensor(a) * (p - torch.tensor(target)) ** 2).sum()
        opt.zero_grad()
        loss.backward()
        opt.step()
        assert np.max(np.abs(p.detach().numpy() - ref[k])) < 1e-10


def test_lr_zero_leaves_params():
    model = torch.nn.Linear(3, 2).double()
    before = [p.detach().clone() for p in model.parameters()]
    cfg = TrainConfig(lr=0.0, weight_decay=0.0)
    opt = make_optimizer(model.parameters(), cfg)
    loss = model(torch.randn(5, 3, dtype=torch.float64)).pow(2).sum()
    optimizer_step(model, opt, loss, cfg)
    assert all(torch.equal(a, b) for a, b in zip(before, model.parameters()))


# ---------------------------------------------------------------- rng streams


def test_rng_streams_keyed_on_step():
    a, b = RngStreams(7), RngStreams(7)
    assert np.array_equal(a.data(5).integers(0, 100, 10), b.data(5).integers(0, 100, 10))
    assert not np.array_equal(a.data(5).integers(0, 100, 10), a.data(6).integers(0, 100, 10))
    x = torch.randn(4, generator=a.diffusion(2))
    assert torch.equal(x, torch.randn(4, generator=b.diffusion(2)))
    assert not torch.equal(x, torch.randn(4, generator=RngStreams(8).diffusion(2)))


# ---------------------------------------------------------------- training loop


def test_fixed_batch_loss_decreases():
    recs = records(2)
    tr = Trainer(recs, MODEL, small_cfg(lr=2e-3, dtype="float64"), DiffusionConfig())
    batch, masks = tr.next_batch()
    m = masks.double()
    y = batch * m[..., None]
    g = torch.Generator().manual_seed(0)
    sigma = torch.full((batch.shape[0],), 0.5, dtype=torch.float64)
    eps = torch.randn(batch.shape, generator=g, dtype=torch.float64)
    losses = []
    for _ in range(60):
        loss = edm_loss(tr.model, batch, y, m, sigma, eps)
        losses.append(loss.item())
        optimizer_step(tr.model, tr.optimizer, loss, tr.cfg)
    smooth = np.convolve(losses, np.ones(10) / 10, mode="valid")
    assert smooth[-1] < 0.5 * smooth[0]
    assert np.all(np.diff(smooth[:41]) < 0)


def test_two_runs_identical_in_double(tmp_path):
    cfg = small_cfg(dtype="float64", checkpoint_interval=0)
    fit(records(), MODEL, cfg, DiffusionConfig(), tmp_path / "a")
    fit(records(), MODEL, cfg, DiffusionConfig(), tmp_path / "b")
    assert (tmp_path / "a" / "train_log.csv").read_bytes() == (tmp_path / "b" / "train_log.csv").read_bytes()
    assert (tmp_path / "a" / "final.vpde").read_bytes() == (tmp_path / "b" / "final.vpde").read_bytes()


def test_resume_matches_uninterrupted(tmp_path):
    cfg = small_cfg(task=TaskSpec(TaskKind.CONTINUOUS_SENSORS, 0.1))
    fit(records(), MODEL, cfg, DiffusionConfig(), tmp_path / "full")
    part = TrainConfig.from_json({**cfg.to_json(), "steps": 3})
    fit(records(), MODEL, part, DiffusionConfig(), tmp_path / "resumed")
    fit(records(), MODEL, cfg, DiffusionConfig(), tmp_path / "resumed", resume_from=tmp_path / "resumed" / "ckpt_0000003.vpde")
    assert (tmp_path / "full" / "final.vpde").read_bytes() == (tmp_path / "resumed" / "final.vpde").read_bytes()
    assert (tmp_path / "full" / "train_log.csv").read_bytes() == (tmp_path / "resumed" / "train_log.csv").read_bytes()


def test_checkpoint_restores_rng_counters(tmp_path):
    tr = Trainer(records(), MODEL, small_cfg(), DiffusionConfig())
    for _ in range(2):
        tr.train_one()
    tr.save(tmp_path / "c.vpde")
    back = Trainer.resume(tmp_path / "c.vpde", records())
    assert back.step == 2 and back.rng.mask_counter == tr.rng.mask_counter > 0
    assert back.data_scale == tr.data_scale


def test_zero_steps_saves_initial_params(tmp_path):
    tr = fit(records(), MODEL, small_cfg(steps=0), DiffusionConfig(), tmp_path)
    model, _, meta = load_checkpoint(tmp_path / "final.vpde")
    assert meta["step"] == 0
    for p, q in zip(tr.model.parameters(), model.parameters()):
        assert torch.equal(p, q)


def test_train_log_columns(tmp_path):
    calls = []

    def validate(trainer):
        calls.append(trainer.step)
        return 0.5

    fit(records(), MODEL, small_cfg(val_interval=2), DiffusionConfig(), tmp_path, val_records=records(1, seed=9), validate=validate)
    rows = list(csv.reader(open(tmp_path / "train_log.csv")))
    assert rows[0] == LOG_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 7))
    assert calls == [2, 4, 6] and rows[2][3] == "0.5" and rows[1][3] == ""
    assert sorted(p.name for p in tmp_path.glob("ckpt_*")) == ["ckpt_0000003.vpde", "ckpt_0000006.vpde"]


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        Trainer([], MODEL, small_cfg(), DiffusionConfig())
