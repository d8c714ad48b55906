"""Service layer: event model, lifetime estimation, stereo matching and I/O."""

from .config import PipelineConfig, load_config, settings

__all__ = ["PipelineConfig", "load_config", "settings"]
