"""Observation-mask constructors for every inference task."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FrameOutOfRange, RateOutOfRange
from .fields import ObservationMask, TaskKind, TaskSpec

# Forward kinds anchor at frame 0 and inverse kinds at T - 1; mask_for_task fills the frame in.
UNIFIED_TASKS = (
    TaskSpec(TaskKind.CONTINUOUS_SENSORS, 0.03),
    TaskSpec(TaskKind.CONTINUOUS_SENSORS, 0.01),
    TaskSpec(TaskKind.FORWARD_FULL, 1.0),
    TaskSpec(TaskKind.INVERSE_FULL, 1.0),
    TaskSpec(TaskKind.FORWARD_PARTIAL, 0.03),
    TaskSpec(TaskKind.INVERSE_PARTIAL, 0.03),
)


@dataclass
class MaskRng:
    """Counter-based stream: draw k uses the generator seeded by (seed, k)."""

    seed: int
    counter: int = 0

    def next(self) -> np.random.Generator:
        g = np.random.default_rng([self.seed, self.counter])
        self.counter += 1
        return g


def site_count(rate: float, n: int) -> int:
    # guard against 0.29 * 100 == 28.999...
    return min(n, int(math.floor(rate * n + 1e-9)))


def _check_rate(rate):
    if not 0.0 < rate <= 1.0:
        raise RateOutOfRange(f"rate must lie in (0, 1], got {rate}")


def _sites(h: int, w: int, rate: float, rng: MaskRng) -> np.ndarray:
    n = h * w
    k = n if rate == 1.0 else site_count(rate, n)
    flat = np.zeros(n, np.float32)
    flat[rng.next().permutation(n)[:k]] = 1.0
    return flat.reshape(h, w)


def continuous_sensor_mask(T, H, W, rate, rng: MaskRng, channels: int = 1) -> ObservationMask:
    _check_rate(rate)
    sites = _sites(H, W, rate, rng)
    mask = np.broadcast_to(sites, (T, H, W)).copy()
    return ObservationMask.empty_values(mask, channels, TaskSpec(TaskKind.CONTINUOUS_SENSORS, rate))


def frame_mask(T, H, W, frame, rate, rng: MaskRng, channels: int = 1, kind: TaskKind | None = None) -> ObservationMask:
    _check_rate(rate)
    if not 0 <= frame < T:
        raise FrameOutOfRange(f"frame {frame} outside [0, {T})")
    if kind is None:
        forward = frame == 0
        if rate == 1.0:
            kind = TaskKind.FORWARD_FULL if forward else TaskKind.INVERSE_FULL
        else:
            kind = TaskKind.FORWARD_PARTIAL if forward else TaskKind.INVERSE_PARTIAL
    mask = np.zeros((T, H, W), np.float32)
    mask[frame] = _sites(H, W, rate, rng)
    return ObservationMask.empty_values(mask, channels, TaskSpec(kind, rate, frame))


def unrestricted_mask(T, H, W, rate, rng: MaskRng, channels: int = 1) -> ObservationMask:
    """Uniformly scattered spatiotemporal pixels."""
    _check_rate(rate)
    n = T * H * W
    k = n if rate == 1.0 else site_count(rate, n)
    flat = np.zeros(n, np.float32)
    flat[rng.next().permutation(n)[:k]] = 1.0
    return ObservationMask.empty_values(flat.reshape(T, H, W), channels, TaskSpec(TaskKind.UNRESTRICTED, rate))


def mask_for_task(task: TaskSpec, T, H, W, rng: MaskRng, channels: int = 1) -> ObservationMask:
    kind = task.kind
    if kind is TaskKind.CONTINUOUS_SENSORS:
        return continuous_sensor_mask(T, H, W, task.rate, rng, channels)
    if kind is TaskKind.UNRESTRICTED:
        return unrestricted_mask(T, H, W, task.rate, rng, channels)
    rate = 1.0 if kind.is_full else task.rate
    if kind in (TaskKind.FORWARD_FULL, TaskKind.FORWARD_PARTIAL):
        frame = 0
    else:
        frame = T - 1
    return frame_mask(T, H, W, frame, rate, rng, channels, kind)


def sample_unified_task(T, H, W, rng: MaskRng, channels: int = 1, tasks=UNIFIED_TASKS) -> ObservationMask:
    g = rng.next()
    task = tasks[int(g.integers(len(tasks)))]
    return mask_for_task(task, T, H, W, rng, channels)
