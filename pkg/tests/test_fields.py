import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdeinpaint.errors import BadMagic, PayloadLengthMismatch, ShapeMismatch, VersionUnsupported, ZeroNormTruth
from pdeinpaint.fields import (
    Family,
    FieldVideo,
    ObservationMask,
    TaskKind,
    TaskSpec,
    apply_mask,
    read_container,
    relative_l2,
    write_container,
)

TASK = TaskSpec(TaskKind.UNRESTRICTED, 0.5)


def video(data, family=Family.NAVIER_STOKES, seed=None):
    return FieldVideo(np.asarray(data, np.float32), 0.05, 1 / 32, family, seed)


def rand_video(shape=(4, 8, 8, 1), seed=0):
    return video(np.random.default_rng(seed).standard_normal(shape))


# ---------------------------------------------------------------- FieldVideo invariants


def test_field_video_rejects_bad_shapes():
    with pytest.raises(ShapeMismatch):
        video(np.zeros((2, 4, 5, 1)))
    with pytest.raises(ShapeMismatch):
        video(np.zeros((3, 4, 4, 1)), family=Family.HELMHOLTZ)
    with pytest.raises(ValueError):
        video(np.full((1, 2, 2, 1), np.nan))


def test_field_video_is_immutable():
    v = rand_video()
    with pytest.raises(ValueError):
        v.data[0, 0, 0, 0] = 1.0


def test_task_spec_json_and_validation():
    t = TaskSpec(TaskKind.FORWARD_PARTIAL, 0.03, 0)
    assert t.to_json() == {"kind": "ForwardPartial", "rate": 0.03, "frame": 0}
    assert TaskSpec.from_json(t.to_json()) == t
    for bad in (0.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            TaskSpec(TaskKind.CONTINUOUS_SENSORS, bad)


# ---------------------------------------------------------------- relative l2


def test_relative_l2_identity_zero_and_epsilon():
    x = rand_video()
    assert relative_l2(x, x) == 0.0
    assert relative_l2(np.zeros(x.dims), x) == 1.0
    truth = x.data.astype(np.float64)
    assert abs(relative_l2(truth * 1.01, truth) - 0.01) < 1e-7


def test_relative_l2_errors():
    x = rand_video()
    with pytest.raises(ZeroNormTruth):
        relative_l2(x, np.zeros(x.dims))
    with pytest.raises(ShapeMismatch):
        relative_l2(np.zeros((4, 8, 8, 2)), x)


def test_relative_l2_frame_selection():
    truth = rand_video().data.astype(np.float64)
    pred = truth.copy()
    pred[2] += 1.0
    assert relative_l2(pred, truth, frames=[0, 1, 3]) == 0.0
    assert relative_l2(pred, truth, frames=[2]) > 0


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e3) | st.floats(min_value=-1e3, max_value=-1e-3), st.integers(0, 1000))
def test_relative_l2_scale_invariant(a, seed):
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal((2, 4, 4, 1))
    pred = truth + 0.1 * rng.standard_normal(truth.shape)
    assert np.isclose(relative_l2(a * pred, a * truth), relative_l2(pred, truth), rtol=1e-12)


# ---------------------------------------------------------------- masking


def test_apply_mask_all_ones_and_zeros():
    x = rand_video()
    ones = ObservationMask.empty_values(np.ones((4, 8, 8), np.float32), 1, TASK)
    zeros = ObservationMask.empty_values(np.zeros((4, 8, 8), np.float32), 1, TASK)
    assert np.array_equal(apply_mask(x, ones).values, x.data)
    assert np.all(apply_mask(x, zeros).values == 0)


def test_apply_mask_single_pixel():
    x = video(np.random.default_rng(1).standard_normal((3, 4, 4, 2)) + 5)
    m = np.zeros((3, 4, 4), np.float32)
    m[1, 2, 3] = 1
    vals = apply_mask(x, ObservationMask.empty_values(m, 2, TASK)).values
    assert np.count_nonzero(vals) == 2
    assert np.array_equal(vals[1, 2, 3], x.data[1, 2, 3])


def test_apply_mask_idempotent():
    x = rand_video()
    m = ObservationMask.empty_values((np.random.default_rng(2).random((4, 8, 8)) < 0.3).astype(np.float32), 1, TASK)
    once = apply_mask(x, m)
    assert np.array_equal(apply_mask(once.values, m).values, once.values)


def test_observation_mask_invariants():
    with pytest.raises(ValueError):
        ObservationMask(np.full((1, 2, 2), 0.5, np.float32), np.zeros((1, 2, 2, 1), np.float32), TASK)
    with pytest.raises(ValueError):
        ObservationMask(np.zeros((1, 2, 2), np.float32), np.ones((1, 2, 2, 1), np.float32), TASK)


def test_apply_mask_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        apply_mask(rand_video(), ObservationMask.empty_values(np.ones((4, 4, 4), np.float32), 1, TASK))


# ---------------------------------------------------------------- container


def test_container_byte_layout(tmp_path):
    p = tmp_path / "a.vpde"
    write_container(p, video([[[[1.0], [2.0]], [[3.0], [4.0]]]]))
    raw = p.read_bytes()
    assert raw[:4] == b"VPDE"
    assert struct.unpack_from("<H", raw, 4)[0] == 1
    assert raw[-16:] == struct.pack("<4f", 1, 2, 3, 4)


def test_container_bad_magic(tmp_path):
    p = tmp_path / "a.vpde"
    write_container(p, rand_video())
    p.write_bytes(b"XPDE" + p.read_bytes()[4:])
    with pytest.raises(BadMagic):
        read_container(p)


def test_container_bad_version(tmp_path):
    p = tmp_path / "a.vpde"
    write_container(p, rand_video())
    raw = bytearray(p.read_bytes())
    raw[4:6] = struct.pack("<H", 7)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionUnsupported):
        read_container(p)


def test_container_truncated(tmp_path):
    p = tmp_path / "a.vpde"
    write_container(p, rand_video())
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(PayloadLengthMismatch):
        read_container(p)


@settings(max_examples=40, deadline=None)
@given(
    t=st.integers(1, 4),
    n=st.integers(1, 6),
    c=st.integers(1, 2),
    seed=st.integers(0, 2**31),
    family=st.sampled_from([f for f in Family if f is not Family.HELMHOLTZ]),
    dt=st.floats(1e-4, 10),
)
def test_container_round_trip_fuzz(tmp_path_factory, t, n, c, seed, family, dt):
    rng = np.random.default_rng(seed)
    x = FieldVideo((rng.standard_normal((t, n, n, c)) * 10).astype(np.float32), dt, 1 / (n + 1), family, seed)
    p = tmp_path_factory.mktemp("rt") / "x.vpde"
    write_container(p, x)
    y = read_container(p)
    assert y.data.tobytes() == x.data.tobytes()
    assert (y.dt, y.dx, y.family, y.seed) == (x.dt, x.dx, x.family, x.seed)
