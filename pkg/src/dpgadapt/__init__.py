"""DPG solver with built-in error estimation and anisotropic metric-based
mesh adaptation for 2D scalar convection-diffusion problems."""

__version__ = "0.1.0"
