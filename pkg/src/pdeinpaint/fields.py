"""Field containers, masking algebra, relative-l2 metric and the VPDE file format."""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import (
    BadMagic,
    FrameOutOfRange,
    PayloadLengthMismatch,
    RateOutOfRange,
    ShapeMismatch,
    VersionUnsupported,
    ZeroNormTruth,
)

MAGIC = b"VPDE"
VERSION = 1
_PREAMBLE = struct.Struct("<4sHI")


class Family(str, enum.Enum):
    NAVIER_STOKES = "NavierStokes"
    KOLMOGOROV = "Kolmogorov"
    WAVE_LAYER = "WaveLayer"
    ALLEN_CAHN = "AllenCahn"
    HELMHOLTZ = "Helmholtz"


class TaskKind(str, enum.Enum):
    CONTINUOUS_SENSORS = "ContinuousSensors"
    FORWARD_FULL = "ForwardFull"
    INVERSE_FULL = "InverseFull"
    FORWARD_PARTIAL = "ForwardPartial"
    INVERSE_PARTIAL = "InversePartial"
    UNRESTRICTED = "Unrestricted"

    @property
    def is_full(self) -> bool:
        return self in (TaskKind.FORWARD_FULL, TaskKind.INVERSE_FULL)


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    rate: float = 1.0
    frame: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if not 0.0 < self.rate <= 1.0:
            raise RateOutOfRange(f"rate must lie in (0, 1], got {self.rate}")
        if self.frame < 0:
            raise FrameOutOfRange(f"frame must be non-negative, got {self.frame}")

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "rate": self.rate, "frame": self.frame}

    @classmethod
    def from_json(cls, d: dict) -> "TaskSpec":
        return cls(TaskKind(d["kind"]), float(d.get("rate", 1.0)), int(d.get("frame", 0)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FieldVideo:
    """A [T, H, W, C] float32 trajectory with grid metadata."""

    data: np.ndarray
    dt: float
    dx: float
    family: Family
    seed: Optional[int] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 4:
            raise ShapeMismatch(f"expected [T,H,W,C] data, got shape {data.shape}")
        t, h, w, c = data.shape
        if t < 1 or c < 1 or h < 1:
            raise ShapeMismatch(f"degenerate dims {data.shape}")
        if h != w:
            raise ShapeMismatch(f"only square grids are supported, got {h}x{w}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field contains non-finite entries")
        family = Family(self.family)
        if family is Family.HELMHOLTZ and t != 2:
            raise ShapeMismatch(f"Helmholtz records hold exactly 2 frames, got {t}")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "dx", float(self.dx))

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return tuple(int(s) for s in self.data.shape)

    def with_data(self, data: np.ndarray) -> "FieldVideo":
        return FieldVideo(data, self.dt, self.dx, self.family, self.seed)


@dataclass(frozen=True)
class ObservationMask:
    mask: np.ndarray  # [T, H, W] in {0, 1}
    values: np.ndarray  # [T, H, W, C], zero where mask is zero
    task: TaskSpec = field(default_factory=lambda: TaskSpec(TaskKind.UNRESTRICTED))

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=np.float32)
        values = np.asarray(self.values, dtype=np.float32)
        if mask.ndim != 3 or values.ndim != 4 or values.shape[:3] != mask.shape:
            raise ShapeMismatch(f"mask {mask.shape} incompatible with values {values.shape}")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        if np.any(values[mask == 0] != 0):
            raise ValueError("values must vanish where the mask is zero")
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def empty_values(cls, mask: np.ndarray, channels: int, task: TaskSpec) -> "ObservationMask":
        mask = np.asarray(mask, dtype=np.float32)
        return cls(mask, np.zeros(mask.shape + (channels,), np.float32), task)

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def _as_array(x) -> np.ndarray:
    return x.data if isinstance(x, FieldVideo) else np.asarray(x)


def relative_l2(pred, truth, frames: Optional[Iterable[int]] = None, mask=None) -> float:
    """||pred - truth|| / ||truth|| over the selected frames (and optionally a [T,H,W] mask).

    Norms are accumulated in float64.
    """
    p = np.asarray(_as_array(pred), dtype=np.float64)
    t = np.asarray(_as_array(truth), dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeMismatch(f"prediction {p.shape} vs truth {t.shape}")
    if frames is not None:
        idx = np.asarray(sorted(set(int(f) for f in frames)), dtype=int)
        p, t = p[idx], t[idx]
        if mask is not None:
            mask = np.asarray(mask)[idx]
    if mask is not None:
        sel = np.asarray(mask).astype(bool)
        if sel.shape != t.shape[: sel.ndim]:
            raise ShapeMismatch(f"mask {sel.shape} incompatible with field {t.shape}")
        p, t = p[sel], t[sel]
    den = np.sqrt(np.sum(t * t))
    if den == 0.0:
        raise ZeroNormTruth("truth has zero norm over the selection")
    return float(np.sqrt(np.sum((p - t) ** 2)) / den)


def apply_mask(x, m: ObservationMask) -> ObservationMask:
    data = _as_array(x)
    if data.shape[:3] != m.mask.shape or data.ndim != 4:
        raise ShapeMismatch(f"field {data.shape} incompatible with mask {m.mask.shape}")
    values = (data * m.mask[..., None]).astype(np.float32)
    return ObservationMask(m.mask, values, m.task)


# --- VPDE framing --------------------------------------------------------


def write_frame(path, header: dict, payload: bytes) -> None:
    """Write magic, version, length-prefixed JSON header, then raw payload."""
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREAMBLE.pack(MAGIC, VERSION, len(head)))
        fh.write(head)
        fh.write(payload)


def read_frame(path) -> tuple[dict, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < _PREAMBLE.size:
        raise BadMagic(f"{path}: file too short for a VPDE preamble")
    magic, version, hlen = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise VersionUnsupported(f"{path}: version {version} not supported")
    start = _PREAMBLE.size
    if len(raw) < start + hlen:
        raise PayloadLengthMismatch(f"{path}: truncated header")
    header = json.loads(raw[start : start + hlen].decode("utf-8"))
    return header, raw[start + hlen :]


def write_container(path, x: FieldVideo) -> None:
    header = {
        "dims": list(x.dims),
        "dtype": "f32le",
        "dt": x.dt,
        "dx": x.dx,
        "family": x.family.value,
        "seed": x.seed,
    }
    write_frame(path, header, np.ascontiguousarray(x.data, dtype="<f4").tobytes())


def read_container(path) -> FieldVideo:
    header, payload = read_frame(path)
    if header.get("dtype") != "f32le":
        raise VersionUnsupported(f"{path}: unsupported dtype {header.get('dtype')!r}")
    dims = [int(d) for d in header["dims"]]
    if len(payload) != 4 * int(np.prod(dims)):
        raise PayloadLengthMismatch(
            f"{path}: payload holds {len(payload)} bytes, dims {dims} need {4 * int(np.prod(dims))}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    return FieldVideo(data, header["dt"], header["dx"], Family(header["family"]), header.get("seed"))
