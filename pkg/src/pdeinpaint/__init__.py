"""Video-inpainting diffusion toolkit for spatiotemporal PDE data."""

__version__ = "0.1.0"
