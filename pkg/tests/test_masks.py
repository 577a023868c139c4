import numpy as np
import pytest
from scipy import stats

from pdeinpaint.errors import FrameOutOfRange, RateOutOfRange
from pdeinpaint.fields import TaskKind, TaskSpec
from pdeinpaint.masks import (
    UNIFIED_TASKS,
    MaskRng,
    continuous_sensor_mask,
    frame_mask,
    mask_for_task,
    sample_unified_task,
    site_count,
    unrestricted_mask,
)


def valid(m):
    assert set(np.unique(m.mask)) <= {0.0, 1.0}
    assert np.all(m.values[m.mask == 0] == 0)


def test_sensor_rate_one_is_full():
    m = continuous_sensor_mask(4, 8, 8, 1.0, MaskRng(0))
    assert np.all(m.mask == 1)


def test_sensor_popcount_128():
    m = continuous_sensor_mask(3, 128, 128, 0.03, MaskRng(1))
    assert m.mask[0].sum() == 491
    assert site_count(0.03, 128 * 128) == 491
    valid(m)


def test_sensor_mask_time_constant():
    m = continuous_sensor_mask(6, 16, 16, 0.1, MaskRng(2))
    assert all(np.array_equal(m.mask[0], m.mask[t]) for t in range(6))


def test_frame_mask_forward_full():
    m = frame_mask(20, 16, 16, 0, 1.0, MaskRng(0))
    assert m.mask.sum() == 256 and m.mask[0].sum() == 256
    assert m.task.kind is TaskKind.FORWARD_FULL


def test_frame_mask_inverse_partial_popcount():
    m = frame_mask(20, 64, 64, 19, 0.03, MaskRng(5))
    assert m.mask.sum() == 122 and m.mask[19].sum() == 122
    assert m.task.kind is TaskKind.INVERSE_PARTIAL


def test_masks_deterministic():
    a = frame_mask(4, 16, 16, 3, 0.1, MaskRng(9, 4))
    b = frame_mask(4, 16, 16, 3, 0.1, MaskRng(9, 4))
    assert np.array_equal(a.mask, b.mask)
    c = frame_mask(4, 16, 16, 3, 0.1, MaskRng(9, 5))
    assert not np.array_equal(a.mask, c.mask)


def test_mask_errors():
    with pytest.raises(FrameOutOfRange):
        frame_mask(4, 8, 8, 4, 0.5, MaskRng(0))
    with pytest.raises(RateOutOfRange):
        continuous_sensor_mask(4, 8, 8, 0.0, MaskRng(0))
    with pytest.raises(RateOutOfRange):
        unrestricted_mask(4, 8, 8, 1.2, MaskRng(0))


def test_unrestricted_popcount():
    m = unrestricted_mask(4, 16, 16, 0.05, MaskRng(0))
    assert m.mask.sum() == site_count(0.05, 4 * 256)


@pytest.mark.parametrize("task", UNIFIED_TASKS)
def test_mask_for_task_anchors(task):
    m = mask_for_task(task, 8, 16, 16, MaskRng(3))
    valid(m)
    observed = np.flatnonzero(m.mask.sum(axis=(1, 2)))
    if task.kind in (TaskKind.FORWARD_FULL, TaskKind.FORWARD_PARTIAL):
        assert list(observed) == [0]
    elif task.kind in (TaskKind.INVERSE_FULL, TaskKind.INVERSE_PARTIAL):
        assert list(observed) == [7]
    else:
        assert len(observed) == 8


def test_unified_mixture_uniform():
    rng = MaskRng(123)
    counts = {}
    for _ in range(6000):
        m = sample_unified_task(4, 8, 8, rng)
        valid(m)
        key = (m.task.kind, m.task.rate)
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 6
    obs = np.array(list(counts.values()))
    assert np.all((obs >= 800) & (obs <= 1200))
    assert stats.chisquare(obs).pvalue > 0.01


def test_unified_partial_anchor_frames():
    rng = MaskRng(7)
    for _ in range(300):
        m = sample_unified_task(5, 8, 8, rng)
        if m.task.kind is TaskKind.FORWARD_PARTIAL:
            assert m.task.frame == 0 and m.mask[1:].sum() == 0
        if m.task.kind is TaskKind.INVERSE_PARTIAL:
            assert m.task.frame == 4 and m.mask[:4].sum() == 0


def test_masks_ignore_field_values():
    a = mask_for_task(TaskSpec(TaskKind.CONTINUOUS_SENSORS, 0.1), 2, 8, 8, MaskRng(1), channels=3)
    assert a.values.shape == (2, 8, 8, 3)
    assert np.all(a.values == 0)
