"""Events, sensor geometry, the surface of active events and active-event queries."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Deque, Iterable, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, NonMonotonicTimestampError, OutOfBoundsError

if TYPE_CHECKING:
    from .lifetime import PlaneNormal

NEVER = -1


class Polarity(Enum):
    """Sign of the brightness change."""

    OFF = 0
    ON = 1


class Side(Enum):
    """Sensor of a stereo pair."""

    LEFT = 0
    RIGHT = 1

    @property
    def other(self) -> "Side":
        return Side.RIGHT if self is Side.LEFT else Side.LEFT


class LifetimeSource(Enum):
    """Where an event's lifetime came from."""

    PLANE_FIT = "plane_fit"
    PREDICTED = "predicted"
    MATCHED = "matched"
    FIXED = "fixed"
    NOISE = "noise"


@dataclass(frozen=True)
class Event:
    """A single pixel brightness-change report; ``t`` is in microseconds."""

    x: int
    y: int
    t: int
    polarity: Polarity = Polarity.ON
    side: Side = Side.LEFT


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel array size plus stereo constants."""

    width: int = 240
    height: int = 180
    baseline: float = 0.1
    max_disparity: int = 32

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ConfigError(f"Sensor size must be positive, got {self.width}x{self.height}")
        if not 0 < self.max_disparity < self.width:
            raise ConfigError(
                f"max_disparity must satisfy 0 < max_disparity < width, got {self.max_disparity}"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        """Array shape (rows, columns)."""
        return (self.height, self.width)

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def check(self, event: Event) -> None:
        """Raise OutOfBoundsError when ``event`` lies outside the array."""
        if not self.contains(event.x, event.y):
            raise OutOfBoundsError(
                f"Event at ({event.x}, {event.y}) outside {self.width}x{self.height} sensor"
            )


@dataclass(frozen=True)
class AugmentedEvent:
    """An event plus its estimated lifetime, disparity and fitted plane."""

    event: Event
    lifetime_us: Optional[int] = None
    disparity: Optional[int] = None
    normal: Optional["PlaneNormal"] = None
    source: LifetimeSource = LifetimeSource.NOISE

    @property
    def is_noise(self) -> bool:
        return self.lifetime_us is None

    @property
    def end_us(self) -> Optional[int]:
        return None if self.lifetime_us is None else self.event.t + self.lifetime_us

    def is_active(self, t_now: int) -> bool:
        """True when ``t <= t_now <= t + lifetime``; noise is never active."""
        if self.lifetime_us is None:
            return False
        return self.event.t <= t_now <= self.event.t + self.lifetime_us


class SurfaceOfActiveEvents:
    """
    Per-pixel latest timestamp and polarity for one sensor.

    Arrays are indexed ``[y, x]``; ``NEVER`` marks pixels that never fired.
    Single writer: exactly one stream of updates per instance.
    """

    def __init__(self, geometry: SensorGeometry) -> None:
        self.geometry = geometry
        self.timestamps = np.full(geometry.shape, NEVER, dtype=np.int64)
        self.polarities = np.zeros(geometry.shape, dtype=np.int8)

    def update(self, event: Event) -> None:
        self.geometry.check(event)
        if event.t < self.timestamps[event.y, event.x]:
            raise NonMonotonicTimestampError(
                f"Timestamp {event.t} older than stored {self.timestamps[event.y, event.x]} "
                f"at ({event.x}, {event.y})"
            )
        self.timestamps[event.y, event.x] = event.t
        self.polarities[event.y, event.x] = event.polarity.value

    def query(self, x: int, y: int) -> Optional[int]:
        """Latest timestamp at (x, y), or None if the pixel never fired."""
        value = int(self.timestamps[y, x])
        return None if value == NEVER else value

    def polarity_at(self, x: int, y: int) -> Optional[Polarity]:
        if self.timestamps[y, x] == NEVER:
            return None
        return Polarity(int(self.polarities[y, x]))


def sae_update(sae: SurfaceOfActiveEvents, event: Event) -> SurfaceOfActiveEvents:
    """
    Store ``event`` as the latest event at its pixel.

    Raises:
        OutOfBoundsError: If the event lies outside the sensor.
    """
    sae.update(event)
    return sae


def sae_query(sae: SurfaceOfActiveEvents, x: int, y: int) -> Optional[int]:
    if not sae.geometry.contains(x, y):
        raise OutOfBoundsError(f"pixel ({x}, {y}) is outside the {sae.geometry.width}x{sae.geometry.height} sensor")
    return sae.query(x, y)


def spatiotemporal_window(
    sae: SurfaceOfActiveEvents,
    center: Tuple[int, int],
    n: int,
    dt_max: int,
    t_now: int,
) -> np.ndarray:
    """
    Collect fresh SAE points in the N x N window around ``center``.

    Returns:
        np.ndarray: ``(k, 3)`` int64 rows of absolute ``(x, y, t)``, row-major order.
        The window is clipped at the sensor borders.
    """
    if n < 3 or n % 2 == 0:
        raise ValueError(f"Window side must be odd and >= 3, got {n}")
    cx, cy = center
    half = n // 2
    x0, x1 = max(cx - half, 0), min(cx + half, sae.geometry.width - 1)
    y0, y1 = max(cy - half, 0), min(cy + half, sae.geometry.height - 1)
    block = sae.timestamps[y0 : y1 + 1, x0 : x1 + 1]
    fresh = (block != NEVER) & (block >= t_now - dt_max) & (block <= t_now)
    rows, cols = np.nonzero(fresh)
    return np.column_stack((cols + x0, rows + y0, block[rows, cols])).astype(np.int64)


def active_events(events: Iterable[AugmentedEvent], t_now: int) -> List[AugmentedEvent]:
    """Events with ``t <= t_now <= t + lifetime``; noise events are skipped."""
    return [item for item in events if item.is_active(t_now)]


def crop_region(array: np.ndarray, x0: int, y0: int, x1: int, y1: int, fill=0) -> np.ndarray:
    """
    Copy ``array[y0:y1+1, x0:x1+1]``, filling positions outside the array with ``fill``.

    Bounds are inclusive and may extend past the array edges.
    """
    height, width = array.shape[:2]
    out = np.full((y1 - y0 + 1, x1 - x0 + 1) + array.shape[2:], fill, dtype=array.dtype)
    sx0, sx1 = max(x0, 0), min(x1, width - 1)
    sy0, sy1 = max(y0, 0), min(y1, height - 1)
    if sx0 <= sx1 and sy0 <= sy1:
        out[sy0 - y0 : sy1 - y0 + 1, sx0 - x0 : sx1 - x0 + 1] = array[sy0 : sy1 + 1, sx0 : sx1 + 1]
    return out


class EventStore:
    """
    Recent lifetimed events of one sensor plus per-pixel maps of the latest one.

    The deque keeps events for ``retention_us`` after their start; the maps
    answer region queries (active masks, matched-window lifetimes) in O(region).
    """

    def __init__(self, geometry: SensorGeometry, retention_us: int) -> None:
        self.geometry = geometry
        self.retention_us = retention_us
        self._events: Deque[AugmentedEvent] = deque()
        self.start_us = np.full(geometry.shape, NEVER, dtype=np.int64)
        self.lifetime_us = np.zeros(geometry.shape, dtype=np.int64)
        self.polarity = np.zeros(geometry.shape, dtype=np.int8)

    def __len__(self) -> int:
        return len(self._events)

    def __iter__(self):
        return iter(self._events)

    def add(self, item: AugmentedEvent) -> None:
        """Record a lifetimed event; noise events are ignored."""
        if item.lifetime_us is None:
            return
        event = item.event
        self._events.append(item)
        if event.t >= self.start_us[event.y, event.x]:
            self.start_us[event.y, event.x] = event.t
            self.lifetime_us[event.y, event.x] = item.lifetime_us
            self.polarity[event.y, event.x] = event.polarity.value
        self.evict(event.t)

    def evict(self, t_now: int) -> None:
        cutoff = t_now - self.retention_us
        while self._events and self._events[0].event.t < cutoff:
            self._events.popleft()

    def active_region(
        self, t_now: int, x0: int, y0: int, x1: int, y1: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        ON and OFF activity over an inclusive region (may exceed the sensor).

        Only events that started at or before ``t_now`` count as active.
        """
        start = crop_region(self.start_us, x0, y0, x1, y1, fill=NEVER)
        life = crop_region(self.lifetime_us, x0, y0, x1, y1)
        pol = crop_region(self.polarity, x0, y0, x1, y1)
        active = (start != NEVER) & (start <= t_now) & (t_now <= start + life)
        return active & (pol == Polarity.ON.value), active & (pol == Polarity.OFF.value)

    def lifetimes_in_window(self, center: Tuple[int, int], n: int, t_now: int) -> np.ndarray:
        """Lifetimes (us) of events active at ``t_now`` in the N x N window around ``center``."""
        cx, cy = center
        half = n // 2
        x0, y0, x1, y1 = cx - half, cy - half, cx + half, cy + half
        start = crop_region(self.start_us, x0, y0, x1, y1, fill=NEVER)
        life = crop_region(self.lifetime_us, x0, y0, x1, y1)
        active = (start != NEVER) & (start <= t_now) & (t_now <= start + life)
        return life[active]
