"""Configuration management for the evstereo pipeline."""

import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional

from dotenv import dotenv_values

from .errors import ConfigError

# NOTE: .env loading is handled by cli.load_environment so the
# process environment is already populated when this module is used.

SUPPORTED_REDUCERS = {"median", "mean", "min", "max"}
PACKET_ORDERS = ("random", "alternate", "left", "right")

DUMP_HEADER = (
    "# evstereo pipeline configuration",
    "# Flat `key = value` lines; unknown keys are rejected.",
)


def _option(default, help_text: str):
    return field(default=default, metadata={"help": help_text})


@dataclass(frozen=True)
class RansacParams:
    """Plane-fitting parameters for single-event lifetime estimation."""

    mu: float = 2e-3
    m: int = 4
    max_iterations: int = 30
    window_n: int = 5
    dt_max_us: int = 100_000
    reliability_threshold_us: int = 500
    min_inlier_fraction: float = 0.25

    def required_inliers(self, candidates: int) -> int:
        """Minimum inlier count for a window holding ``candidates`` points."""
        return max(self.m, math.ceil(self.min_inlier_fraction * candidates))


@dataclass(frozen=True)
class StereoParams:
    """Matching parameters: cost window, aggregation, WTA and matched window."""

    cost_window: int = 15
    aggregation_region: int = 3
    aggregation_iterations: int = 1
    max_disparity: int = 32
    confidence_ratio: float = 1.25
    match_window: int = 15
    descriptor_window: int = 5
    match_reducer: str = "median"


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the stereo lifetime pipeline, each with a default."""

    width: int = _option(240, "sensor columns (pixels)")
    height: int = _option(180, "sensor rows (pixels)")
    baseline: float = _option(0.1, "stereo baseline in meters (informational)")
    max_disparity: int = _option(32, "largest disparity searched (pixels)")
    dt_max_us: int = _option(100_000, "plane-fitting time frame and store retention (us)")
    window_n: int = _option(5, "plane-fitting window side (odd)")
    ransac_mu: float = _option(0.002, "RANSAC inlier distance threshold")
    min_inliers: int = _option(4, "minimum RANSAC inlier count")
    min_inlier_fraction: float = _option(0.25, "minimum inliers as a fraction of window points")
    max_iterations: int = _option(30, "RANSAC iterations before declaring noise")
    reliability_threshold_us: int = _option(500, "max prediction error for reusing a cached plane (us)")
    descriptor_window: int = _option(5, "descriptor window side and nearest-active search radius")
    cost_window: int = _option(15, "matching cost window side (odd)")
    aggregation_region: int = _option(3, "cost aggregation region side (odd)")
    aggregation_iterations: int = _option(1, "cost aggregation iterations")
    confidence_ratio: float = _option(1.25, "uniqueness ratio second-best / best cost")
    match_window: int = _option(15, "matched window side for lifetime transfer (odd)")
    match_reducer: str = _option("median", "matched window reducer: median, mean, min or max")
    accumulation_interval_us: int = _option(10_000, "fixed-interval baseline lifetime (us)")
    packet_us: int = _option(1000, "span of one sensor packet; a sensor is readable up to its last packet (us)")
    packet_order: str = _option("random", "which sensor goes first in each packet slot: random, alternate, left or right")
    seed: int = _option(0, "RANSAC random seed")
    left_path: str = _option("", "left event file")
    right_path: str = _option("", "right event file")
    output_dir: str = _option("out", "output directory")
    render_times: str = _option("", "comma separated seconds at which frames are rendered")
    log_level: str = _option("INFO", "logging level")

    @property
    def geometry(self) -> "SensorGeometry":
        from .events import SensorGeometry

        return SensorGeometry(
            width=self.width,
            height=self.height,
            baseline=self.baseline,
            max_disparity=self.max_disparity,
        )

    @property
    def ransac(self) -> RansacParams:
        return RansacParams(
            mu=self.ransac_mu,
            m=self.min_inliers,
            max_iterations=self.max_iterations,
            window_n=self.window_n,
            dt_max_us=self.dt_max_us,
            reliability_threshold_us=self.reliability_threshold_us,
            min_inlier_fraction=self.min_inlier_fraction,
        )

    @property
    def stereo(self) -> StereoParams:
        return StereoParams(
            cost_window=self.cost_window,
            aggregation_region=self.aggregation_region,
            aggregation_iterations=self.aggregation_iterations,
            max_disparity=self.max_disparity,
            confidence_ratio=self.confidence_ratio,
            match_window=self.match_window,
            descriptor_window=self.descriptor_window,
            match_reducer=self.match_reducer,
        )

    @property
    def render_times_us(self) -> List[int]:
        """Render instants converted to integer microseconds."""
        if not self.render_times.strip():
            return []
        try:
            return [round(float(item) * 1_000_000) for item in self.render_times.split(",") if item.strip()]
        except ValueError as exc:
            raise ConfigError(f"render_times must be comma separated seconds: {exc}") from exc

    def with_overrides(self, overrides: Mapping[str, object]) -> "PipelineConfig":
        """Return a copy with ``overrides`` applied (values coerced to field types)."""
        return replace(self, **coerce_values(overrides))

    def validation_errors(self) -> List[str]:
        """Get a list of validation errors for the current values."""

        errors: List[str] = []
        if self.width <= 0 or self.height <= 0:
            errors.append("width and height must be positive")
        if not 0 < self.max_disparity < self.width:
            errors.append("max_disparity must satisfy 0 < max_disparity < width")
        for name in ("window_n", "descriptor_window", "cost_window", "match_window"):
            value = getattr(self, name)
            if value < 3 or value % 2 == 0:
                errors.append(f"{name} must be odd and >= 3 (got {value})")
        if self.aggregation_region < 1 or self.aggregation_region % 2 == 0:
            errors.append(f"aggregation_region must be odd and >= 1 (got {self.aggregation_region})")
        if self.aggregation_iterations < 0:
            errors.append("aggregation_iterations must be >= 0")
        if self.min_inliers < 3:
            errors.append("min_inliers must be >= 3")
        if not 0.0 <= self.min_inlier_fraction <= 1.0:
            errors.append("min_inlier_fraction must lie in [0, 1]")
        if self.ransac_mu <= 0:
            errors.append("ransac_mu must be > 0")
        if self.max_iterations < 1:
            errors.append("max_iterations must be >= 1")
        if self.confidence_ratio <= 1.0:
            errors.append("confidence_ratio must be > 1")
        if self.dt_max_us <= 0:
            errors.append("dt_max_us must be > 0")
        if self.reliability_threshold_us < 0:
            errors.append("reliability_threshold_us must be >= 0")
        if self.accumulation_interval_us < 0:
            errors.append("accumulation_interval_us must be >= 0")
        if self.match_reducer not in SUPPORTED_REDUCERS:
            errors.append(
                f"Unsupported match_reducer '{self.match_reducer}'. Supported: {sorted(SUPPORTED_REDUCERS)}"
            )
        if self.packet_us < 1:
            errors.append("packet_us must be >= 1")
        if self.packet_order not in PACKET_ORDERS:
            errors.append(f"Unsupported packet_order '{self.packet_order}'. Supported: {list(PACKET_ORDERS)}")
        try:
            self.render_times_us
        except ConfigError as exc:
            errors.append(str(exc))
        return errors

    def validate(self) -> "PipelineConfig":
        """Raise ConfigError listing every problem, or return self."""
        errors = self.validation_errors()
        if errors:
            raise ConfigError(f"Invalid configuration: {', '.join(errors)}", errors)
        return self


_FIELDS = {f.name: f for f in fields(PipelineConfig)}


def _coerce(name: str, raw: object) -> object:
    target = _FIELDS[name].type
    if isinstance(raw, target) and not isinstance(raw, bool):
        return raw
    text = "" if raw is None else str(raw).strip()
    try:
        if target is int:
            number = float(text)
            if not number.is_integer():
                raise ValueError(f"not an integer: {text!r}")
            return int(number)
        if target is float:
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"Invalid value for '{name}': {raw!r} ({exc})", [name]) from exc
    return text


def coerce_values(values: Mapping[str, object]) -> Dict[str, object]:
    """Coerce raw key/value pairs to PipelineConfig field types, rejecting unknown keys."""
    unknown = sorted(key for key in values if key not in _FIELDS)
    if unknown:
        raise ConfigError(f"Unknown configuration keys: {', '.join(unknown)}", unknown)
    return {key: _coerce(key, value) for key, value in values.items()}


def parse_overrides(assignments: Iterable[str]) -> Dict[str, str]:
    """Parse ``key=value`` strings as given to ``--set``."""
    result: Dict[str, str] = {}
    for assignment in assignments:
        key, sep, value = assignment.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Expected key=value, got '{assignment}'")
        result[key.strip()] = value.strip()
    return result


def read_config_file(path: Path) -> Dict[str, Optional[str]]:
    """Read a flat ``key = value`` file."""
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    values = dotenv_values(path, interpolate=False)
    missing = sorted(key for key, value in values.items() if value is None)
    if missing:
        raise ConfigError(f"Config keys without a value in {path}: {', '.join(missing)}", missing)
    return dict(values)


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, object]] = None,
) -> PipelineConfig:
    """
    Build a validated PipelineConfig.

    Order: defaults, then ``path`` (or EVSTEREO_CONFIG when unset), then ``overrides``.

    Raises:
        ConfigError: On unknown keys, bad values or failed validation.
    """
    config = PipelineConfig()
    if path is None and settings.config_path:
        path = Path(settings.config_path)
    if path is not None:
        config = config.with_overrides(read_config_file(Path(path)))
    if overrides:
        config = config.with_overrides(overrides)
    return config.validate()


def _format_value(value: object) -> str:
    if isinstance(value, str):
        return value if value else '""'
    return repr(value)


def dump_config(config: Optional[PipelineConfig] = None) -> str:
    """Render ``config`` (defaults when omitted) as a documented config file."""
    config = config or PipelineConfig()
    lines = list(DUMP_HEADER)
    for item in fields(PipelineConfig):
        lines.append("")
        lines.append(f"# {item.metadata['help']}")
        lines.append(f"{item.name} = {_format_value(getattr(config, item.name))}")
    return "\n".join(lines) + "\n"


class Settings:
    """Process-level settings loaded from environment variables."""

    def __init__(self) -> None:
        self.LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
        self.DEBUG: bool = os.getenv("APP_DEBUG", "false").lower() == "true"
        self.config_path: Optional[str] = os.getenv("EVSTEREO_CONFIG") or None

    def reload(self) -> None:
        """Re-read the environment (after a .env file was loaded)."""
        self.__init__()


# Export settings instance
settings = Settings()
