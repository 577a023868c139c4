"""Trajectory dataset generation and the JSON manifest that indexes it."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..fields import Family, FieldVideo, read_container, write_container
from .allen_cahn import AcConfig, simulate_allen_cahn
from .grf import GrfSpec, sample_grf_array
from .helmholtz import HelmholtzConfig, solve_helmholtz
from .navier_stokes import Forcing, NsConfig, dealias_field, simulate_ns
from .wave import WaveLayerConfig, simulate_wave_layer

log = logging.getLogger(__name__)

FAMILY_ALIASES = {
    "ns": Family.NAVIER_STOKES,
    "navier-stokes": Family.NAVIER_STOKES,
    "kf": Family.KOLMOGOROV,
    "kolmogorov": Family.KOLMOGOROV,
    "wave": Family.WAVE_LAYER,
    "wl": Family.WAVE_LAYER,
    "wave-layer": Family.WAVE_LAYER,
    "ac": Family.ALLEN_CAHN,
    "allen-cahn": Family.ALLEN_CAHN,
    "helmholtz": Family.HELMHOLTZ,
}

FRAME_DT = 0.05


def parse_family(name) -> Family:
    if isinstance(name, Family):
        return name
    try:
        return FAMILY_ALIASES[str(name).lower()]
    except KeyError:
        return Family(name)


def default_config(family: Family, size: int, frames: int):
    """Stable desk-scale solver settings for a grid size and frame count."""
    if family in (Family.NAVIER_STOKES, Family.KOLMOGOROV):
        forcing = Forcing.KOLMOGOROV if family is Family.KOLMOGOROV else Forcing.STATIC_LOW_FREQ
        stride = 20
        return NsConfig(n=size, forcing=forcing, dt_solver=FRAME_DT / stride, frames=frames, stride=stride)
    if family is Family.WAVE_LAYER:
        # Courant number 0.25 at the top of the speed range
        stride = max(1, math.ceil(FRAME_DT / (0.25 / size)))
        return WaveLayerConfig(n=size, dt_solver=FRAME_DT / stride, frames=frames, stride=stride)
    if family is Family.ALLEN_CAHN:
        return AcConfig(n=size, dt_solver=1e-3, frames=frames, stride=5)
    return HelmholtzConfig(n=size)


def generate_trajectory(family, seed: int, size: int = 32, frames: int = 8, config=None) -> FieldVideo:
    family = parse_family(family)
    cfg = config if config is not None else default_config(family, size, frames)
    if family in (Family.NAVIER_STOKES, Family.KOLMOGOROV):
        w0 = dealias_field(sample_grf_array(GrfSpec(n=cfg.n, seed=seed)), cfg)
        video = simulate_ns(cfg, w0)
    elif family is Family.WAVE_LAYER:
        video, _ = simulate_wave_layer(cfg, seed)
    elif family is Family.ALLEN_CAHN:
        g = sample_grf_array(GrfSpec(n=cfg.n, seed=seed))
        video = simulate_allen_cahn(cfg, g / np.max(np.abs(g)))
    else:
        src = replace(cfg.source, n=cfg.n, seed=seed)
        video = solve_helmholtz(cfg, sample_grf_array(src))
    return FieldVideo(video.data, video.dt, video.dx, video.family, seed)


def split_indices(count: int, val_fraction: float) -> tuple[list[int], list[int]]:
    n_val = int(math.floor(count * val_fraction))
    return list(range(count - n_val)), list(range(count - n_val, count))


def generate_dataset(
    family,
    count: int,
    out_dir,
    seed: int = 0,
    size: int = 32,
    frames: int = 8,
    config=None,
    val_fraction: float = 0.125,
    workers: int = 1,
) -> dict:
    """Write ``count`` containers (trajectory i uses seed + i) plus ``manifest.json``."""
    family = parse_family(family)
    if family is Family.HELMHOLTZ:
        frames = 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"traj_{i:05d}.vpde" for i in range(count)]

    def make(i):
        video = generate_trajectory(family, seed + i, size, frames, config)
        write_container(out / names[i], video)
        return video.dims

    if workers > 1 and count > 1:
        with ThreadPoolExecutor(workers) as pool:
            dims = list(pool.map(make, range(count)))
    else:
        dims = [make(i) for i in range(count)]
    train, val = split_indices(count, val_fraction)
    manifest = {
        "family": family.value,
        "count": count,
        "dims": list(dims[0]) if dims else [frames, size, size, 1],
        "seed": seed,
        "files": names,
        "split": {"train": [names[i] for i in train], "val": [names[i] for i in val]},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("wrote %d %s trajectories to %s", count, family.value, out)
    return manifest


@dataclass
class TrajectoryDataset:
    manifest: dict
    root: Path
    records: dict

    @classmethod
    def load(cls, manifest_path) -> "TrajectoryDataset":
        path = Path(manifest_path)
        if path.is_dir():
            path = path / "manifest.json"
        manifest = json.loads(path.read_text())
        root = path.parent
        records = {name: read_container(root / name) for name in manifest["files"]}
        return cls(manifest, root, records)

    def split(self, name: str) -> list[FieldVideo]:
        return [self.records[f] for f in self.manifest["split"][name]]

    @property
    def family(self) -> Family:
        return Family(self.manifest["family"])

    def __len__(self):
        return len(self.records)
