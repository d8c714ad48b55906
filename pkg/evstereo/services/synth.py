"""Synthetic stereo edge scenes with known lifetimes and disparities."""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError
from .events import Event, Polarity, SensorGeometry, Side
from .lifetime import US_PER_SECOND, lifetime_from_velocity
from .utils.logging import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class GroundTruthRecord:
    """Expected lifetime (us, unquantized) and disparity of one generated event."""

    index: int
    tau_us: Optional[float]
    disparity: Optional[int]
    noise: bool = False


@dataclass
class SyntheticStream:
    """Events of one sensor and their ground truth, aligned by index."""

    events: List[Event] = field(default_factory=list)
    truth: List[GroundTruthRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class EdgeScenario:
    """
    A one pixel thick brightness step sweeping the sensor at constant velocity.

    Velocities are per axis in pixels/second: the edge crosses pixel (x, y) at
    ``(x - x0) / vx + (y - y0) / vy`` seconds after ``start_us``, where x0 and y0
    are the borders the edge enters from. ``math.inf`` removes an axis.
    """

    vx: float = 100.0
    vy: float = math.inf
    true_disparity: int = 5
    duration_us: int = 2_000_000
    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    noise_rate: float = 0.0
    seed: int = 0
    start_us: int = 0

    def __post_init__(self) -> None:
        if self.vx == 0 or self.vy == 0 or math.isnan(self.vx) or math.isnan(self.vy):
            raise ConfigError(f"Velocity components must be non-zero, got ({self.vx}, {self.vy})")
        if math.isinf(self.vx) and math.isinf(self.vy):
            raise ConfigError("Edge velocity must be non-zero")
        if not 0 <= self.true_disparity <= self.geometry.max_disparity:
            raise ConfigError(
                f"true_disparity must be within 0..{self.geometry.max_disparity}, got {self.true_disparity}"
            )
        if self.duration_us < 0 or self.noise_rate < 0:
            raise ConfigError("duration_us and noise_rate must be >= 0")

    @classmethod
    def from_orientation(cls, orientation_deg: float, speed: float, **kwargs) -> "EdgeScenario":
        """Scenario whose edge moves along the direction ``orientation_deg`` at normal speed ``speed``."""
        if speed <= 0:
            raise ConfigError(f"speed must be > 0, got {speed}")
        theta = math.radians(orientation_deg)
        cos, sin = round(math.cos(theta), 12), round(math.sin(theta), 12)
        vx = math.inf if cos == 0 else speed / cos
        vy = math.inf if sin == 0 else speed / sin
        return cls(vx=vx, vy=vy, **kwargs)

    @property
    def inverse_velocity(self) -> Tuple[float, float]:
        """Seconds per pixel along x and y (0 for an infinite component)."""
        return (
            0.0 if math.isinf(self.vx) else 1.0 / self.vx,
            0.0 if math.isinf(self.vy) else 1.0 / self.vy,
        )

    @property
    def orientation_deg(self) -> float:
        """Direction of motion in degrees, counter-clockwise from +x."""
        ix, iy = self.inverse_velocity
        return math.degrees(math.atan2(iy, ix)) % 360.0

    @property
    def normal_speed(self) -> float:
        return 1.0 / math.hypot(*self.inverse_velocity)

    @property
    def tau_seconds(self) -> float:
        return lifetime_from_velocity(self.vx, self.vy)

    @property
    def polarity(self) -> Polarity:
        """ON when the edge advances towards +x (or +y for a purely vertical motion)."""
        ix, iy = self.inverse_velocity
        return Polarity.ON if ix > 0 or (ix == 0 and iy > 0) else Polarity.OFF


def _crossing_times(scenario: EdgeScenario) -> np.ndarray:
    geometry = scenario.geometry
    ix, iy = scenario.inverse_velocity
    xs = np.arange(geometry.width, dtype=float)
    ys = np.arange(geometry.height, dtype=float)
    x0 = 0.0 if ix >= 0 else geometry.width - 1.0
    y0 = 0.0 if iy >= 0 else geometry.height - 1.0
    seconds = (xs[None, :] - x0) * ix + (ys[:, None] - y0) * iy
    return scenario.start_us + np.rint(seconds * US_PER_SECOND).astype(np.int64)


def _sorted_stream(rows: List[Tuple[int, int, int, Polarity, Optional[float], Optional[int], bool]], side: Side) -> SyntheticStream:
    rows = sorted(rows, key=lambda r: (r[0], r[2], r[1]))
    stream = SyntheticStream()
    for index, (t, x, y, polarity, tau_us, disparity, noise) in enumerate(rows):
        stream.events.append(Event(x, y, t, polarity, side))
        stream.truth.append(GroundTruthRecord(index, tau_us, disparity, noise))
    return stream


def _rows(stream: SyntheticStream) -> list:
    return [
        (e.t, e.x, e.y, e.polarity, g.tau_us, g.disparity, g.noise)
        for e, g in zip(stream.events, stream.truth)
    ]


def generate_stereo_edge(scenario: EdgeScenario) -> Tuple[SyntheticStream, SyntheticStream]:
    """
    Left and right streams of an edge sweep, each with per-event ground truth.

    Every pixel crossed within ``duration_us`` emits one event. The right stream
    holds the left events shifted to ``x - true_disparity``, dropping those that
    leave the sensor. Noise is added per side when ``noise_rate`` > 0.
    """
    times = _crossing_times(scenario)
    end_us = scenario.start_us + scenario.duration_us
    ys, xs = np.nonzero(times <= end_us)
    tau_us = scenario.tau_seconds * US_PER_SECOND
    d = scenario.true_disparity
    polarity = scenario.polarity

    left_rows, right_rows = [], []
    for x, y in zip(xs.tolist(), ys.tolist()):
        t = int(times[y, x])
        left_rows.append((t, x, y, polarity, tau_us, d, False))
        if x - d >= 0:
            right_rows.append((t, x - d, y, polarity, tau_us, d, False))
    left = _sorted_stream(left_rows, Side.LEFT)
    right = _sorted_stream(right_rows, Side.RIGHT)

    if scenario.noise_rate > 0:
        left = add_noise(left, scenario.noise_rate, [scenario.seed, Side.LEFT.value], scenario.geometry,
                         scenario.start_us, end_us)
        right = add_noise(right, scenario.noise_rate, [scenario.seed, Side.RIGHT.value], scenario.geometry,
                          scenario.start_us, end_us)
    logger.info("Generated edge scene: %s left / %s right events (tau* %.3f ms)",
                len(left), len(right), scenario.tau_seconds * 1e3)
    return left, right


def add_noise(
    stream: SyntheticStream,
    noise_rate: float,
    seed=None,
    geometry: Optional[SensorGeometry] = None,
    start_us: Optional[int] = None,
    end_us: Optional[int] = None,
) -> SyntheticStream:
    """
    Insert uniformly random events at ``noise_rate`` events/second over the whole array.

    The time span defaults to that of the stream. Noise events are flagged in the
    ground truth and the result is re-sorted by timestamp.
    """
    if noise_rate < 0:
        raise ValueError(f"noise_rate must be >= 0, got {noise_rate}")
    geometry = geometry or SensorGeometry()
    if start_us is None:
        start_us = stream.events[0].t if stream.events else 0
    if end_us is None:
        end_us = stream.events[-1].t if stream.events else start_us
    if noise_rate == 0 or end_us < start_us:
        return stream

    side = stream.events[0].side if stream.events else Side.LEFT
    rng = np.random.default_rng(seed)
    count = int(rng.poisson(noise_rate * (end_us - start_us) / US_PER_SECOND))
    ts = rng.integers(start_us, end_us, size=count, endpoint=True)
    xs = rng.integers(0, geometry.width, size=count)
    ys = rng.integers(0, geometry.height, size=count)
    ps = rng.integers(0, 2, size=count)
    rows = _rows(stream)
    rows += [
        (int(t), int(x), int(y), Polarity(int(p)), None, None, True)
        for t, x, y, p in zip(ts, xs, ys, ps)
    ]
    logger.debug("Injected %s noise events", count)
    return _sorted_stream(rows, side)


def sparsify(stream: SyntheticStream, keep_fraction: float, seed=None) -> SyntheticStream:
    """Keep each event independently with probability ``keep_fraction``."""
    if not 0 < keep_fraction <= 1:
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    if keep_fraction == 1:
        return stream
    keep = np.random.default_rng(seed).random(len(stream)) < keep_fraction
    kept = [row for row, k in zip(_rows(stream), keep.tolist()) if k]
    side = stream.events[0].side if stream.events else Side.LEFT
    return _sorted_stream(kept, side)

