"""Coupled event lifetime and disparity estimation for stereo event cameras."""

__version__ = "0.1.0"
