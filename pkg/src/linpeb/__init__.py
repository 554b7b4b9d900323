"""Position error bounds for directional mm-wave arrays on a linear sensor line."""

__version__ = "0.1.0"
