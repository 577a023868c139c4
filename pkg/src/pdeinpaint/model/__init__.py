from .config import HvditConfig, expected_param_count
from .hvdit import HVDiT, EDMDenoiser, build_denoiser

__all__ = ["EDMDenoiser", "HVDiT", "HvditConfig", "build_denoiser", "expected_param_count"]
