import csv

import numpy as np
import pytest
import torch

from pdeinpaint.diffusion import DiffusionConfig
from pdeinpaint.errors import ConfigMismatch
from pdeinpaint.evaluation import (
    autoregressive_rollout,
    evaluate_task,
    forward_sample,
    per_frame_error,
    rate_sweep,
    write_sweep_csv,
)
from pdeinpaint.fields import Family, FieldVideo, TaskKind, TaskSpec
from pdeinpaint.model import HvditConfig, build_denoiser

CS = TaskSpec(TaskKind.CONTINUOUS_SENSORS, 0.1)
FAST = DiffusionConfig(num_steps=4)
ROLL = HvditConfig(frames=8, size=8, patch=(1, 2, 2), widths=(16, 32), depths=(1,), global_depth=1, head_dim=8, kernel=(2, 3, 3), mapping_width=16)


def records(n=3, t=4, seed=0):
    rng = np.random.default_rng(seed)
    return [FieldVideo(rng.standard_normal((t, 8, 8, 1)).astype(np.float32), 0.05, 1 / 8, Family.NAVIER_STOKES, i) for i in range(n)]


class Oracle:
    """Denoiser that always returns the stacked truth, i.e. a perfect memoriser."""

    def __init__(self, recs, scale=1.0):
        self.truth = torch.from_numpy(np.stack([r.data for r in recs]).astype(np.float64) * scale)

    def __call__(self, x, y, m, sigma):
        return self.truth[: x.shape[0]]


def test_oracle_denoiser_scores_zero():
    recs = records()
    for scale in (1.0, 2.5):
        rep = evaluate_task(Oracle(recs, scale), recs, CS, FAST, seeds=(0, 1), data_scale=scale)
        assert len(rep.rows) == 6
        assert rep.err_all[0] < 1e-6 and rep.err_unobserved[0] < 1e-6 and rep.err_observed[0] < 1e-6


def test_zero_denoiser_scores_one():
    recs = records()
    zero = lambda x, y, m, s: torch.zeros_like(x)  # noqa: E731
    rep = evaluate_task(zero, recs, CS, FAST)
    assert np.allclose([r.err_all for r in rep.rows], 1.0, atol=1e-12)
    assert all(np.allclose(r.err_frames, 1.0) for r in rep.rows)


def test_full_observation_has_no_unobserved_error():
    recs = records(1)
    zero = lambda x, y, m, s: torch.zeros_like(x)  # noqa: E731
    row = evaluate_task(zero, recs, TaskSpec(TaskKind.CONTINUOUS_SENSORS, 1.0), FAST).rows[0]
    assert np.isnan(row.err_unobserved) and row.err_observed == row.err_all


def test_forward_task_unobserved_frames():
    recs = records(1)
    rep = evaluate_task(lambda x, y, m, s: y, recs, TaskSpec(TaskKind.FORWARD_FULL, 1.0), FAST)
    row = rep.rows[0]
    # returning the observation reproduces frame 0 and zeros elsewhere
    assert row.err_observed < 1e-12 and abs(row.err_unobserved - 1) < 1e-12
    assert row.err_frames[0] < 1e-12 and np.allclose(row.err_frames[1:], 1.0)


def test_per_frame_error_cases():
    truth = np.ones((3, 2, 2, 1))
    pred = truth.copy()
    pred[1] = 0
    truth[2] = 0
    pred[2] = 5
    errs = per_frame_error(pred, truth)
    assert errs[0] == 0.0 and errs[1] == 1.0 and np.isnan(errs[2])


def test_dims_mismatch():
    model = build_denoiser(HvditConfig(frames=4, size=8, patch=(1, 2, 2), widths=(16, 32), depths=(1,), global_depth=1, head_dim=8, kernel=(2, 3, 3), mapping_width=16))
    with pytest.raises(ConfigMismatch):
        evaluate_task(model, records(1, t=2), CS, FAST)


def test_report_csv_and_empty(tmp_path):
    empty = evaluate_task(lambda *a: None, [], CS, FAST)
    assert empty.rows == [] and np.isnan(empty.err_all[0])
    empty.write_csv(tmp_path / "e.csv", frames=2)
    assert (tmp_path / "e.csv").read_text().splitlines() == ["trajectory_id,task,rate,err_all,err_unobserved,err_frame_0,err_frame_1,seed"]
    rep = evaluate_task(Oracle(records(2)), records(2), CS, FAST, ids=["a", "b"])
    rep.write_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert [r["trajectory_id"] for r in rows] == ["a", "b"] and rows[0]["task"] == "ContinuousSensors"


def test_evaluation_deterministic():
    recs = records(2)
    model = build_denoiser(HvditConfig(frames=4, size=8, patch=(1, 2, 2), widths=(16, 32), depths=(1,), global_depth=1, head_dim=8, kernel=(2, 3, 3), mapping_width=16), seed=2)
    a = evaluate_task(model, recs, CS, FAST, seeds=(3,))
    b = evaluate_task(model, recs, CS, FAST, seeds=(3,))
    assert [r.err_all for r in a.rows] == [r.err_all for r in b.rows]


def test_rate_sweep(tmp_path):
    assert rate_sweep(Oracle(records(1)), records(1), [], FAST) == []
    table = rate_sweep(Oracle(records(2)), records(2), [0.05, 0.5], FAST)
    assert [row["rate"] for row in table] == [0.05, 0.5]
    write_sweep_csv(tmp_path / "s.csv", table)
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 3


# ---------------------------------------------------------------- rollout


@pytest.fixture(scope="module")
def roll_model():
    return build_denoiser(ROLL, seed=5).eval()


def test_rollout_frame_count(roll_model):
    first = np.random.default_rng(0).standard_normal((8, 8, 1))
    with torch.no_grad():
        out = autoregressive_rollout(roll_model, first, 4, FAST, seed=1)
    assert out.shape == (29, 8, 8, 1)


def test_rollout_single_window_is_forward_sample(roll_model):
    first = np.random.default_rng(1).standard_normal((8, 8, 1))
    with torch.no_grad():
        a = autoregressive_rollout(roll_model, first, 1, FAST, seed=7, data_scale=1.3)
        b = forward_sample(roll_model, first, 8, FAST, seed=7, data_scale=1.3)
    assert np.array_equal(a, b)


def test_rollout_windows_chain(roll_model):
    first = np.random.default_rng(2).standard_normal((8, 8, 1))
    with torch.no_grad():
        out = autoregressive_rollout(roll_model, first, 2, FAST, seed=0)
        w0 = forward_sample(roll_model, first, 8, FAST, seed=0)
        w1 = forward_sample(roll_model, w0[-1], 8, FAST, seed=1)
    assert np.array_equal(out[:8], w0) and np.array_equal(out[8:], w1[1:])
    with pytest.raises(ValueError):
        autoregressive_rollout(roll_model, first, 0, FAST)
