"""Shared fixtures for the evstereo test suite."""

import pytest

from evstereo.services.config import PipelineConfig
from evstereo.services.events import SensorGeometry


@pytest.fixture
def small_geometry() -> SensorGeometry:
    return SensorGeometry(width=40, height=20, max_disparity=8)


@pytest.fixture
def small_config() -> PipelineConfig:
    return PipelineConfig(width=40, height=20, max_disparity=8)
