from .allen_cahn import AcConfig, simulate_allen_cahn
from .dataset import TrajectoryDataset, generate_dataset, generate_trajectory, parse_family
from .grf import GrfSpec, sample_grf, sample_grf_array
from .helmholtz import HelmholtzConfig, solve_helmholtz, solve_helmholtz_array
from .navier_stokes import Forcing, NsConfig, simulate_ns
from .wave import WaveLayerConfig, sample_layered_speed, simulate_wave_layer

__all__ = [
    "AcConfig",
    "Forcing",
    "GrfSpec",
    "HelmholtzConfig",
    "NsConfig",
    "TrajectoryDataset",
    "WaveLayerConfig",
    "generate_dataset",
    "generate_trajectory",
    "parse_family",
    "sample_grf",
    "sample_grf_array",
    "sample_layered_speed",
    "simulate_allen_cahn",
    "simulate_ns",
    "simulate_wave_layer",
    "solve_helmholtz",
    "solve_helmholtz_array",
]
