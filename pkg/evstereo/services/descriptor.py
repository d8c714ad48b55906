"""Distance-transform orientation-histogram descriptors over active-event masks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .events import AugmentedEvent, Event, Polarity, SensorGeometry, crop_region

BIN_COUNT = 12
BIN_WIDTH_DEG = 360.0 / BIN_COUNT
DESCRIPTOR_SIZE = 2 * BIN_COUNT

_UNASSIGNED = -2
_UNDEFINED = -1


def orientation_deg(dx: int, dy: int) -> float:
    """Angle of (dx, dy) in [0, 360), counter-clockwise from +x in image coordinates."""
    return math.degrees(math.atan2(dy, dx)) % 360.0


def orientation_bin(dx: int, dy: int) -> int:
    return int(orientation_deg(dx, dy) // BIN_WIDTH_DEG) % BIN_COUNT


@lru_cache(maxsize=None)
def search_offsets(radius: int) -> Tuple[Tuple[int, int, int], ...]:
    """
    Offsets of the square search window in nearest-first order.

    Ties on Euclidean distance go to the smaller angle, then the smaller dx.
    Each entry is ``(dx, dy, bin)`` where the self offset carries bin -1.
    """
    offsets = [(dx, dy) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    offsets.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], orientation_deg(*o), o[0]))
    return tuple(
        (dx, dy, _UNDEFINED if dx == 0 and dy == 0 else orientation_bin(dx, dy)) for dx, dy in offsets
    )


@dataclass(frozen=True, eq=False)
class ActiveMask:
    """ON and OFF activity images over the whole sensor, indexed ``[y, x]``."""

    on: np.ndarray
    off: np.ndarray

    @classmethod
    def empty(cls, geometry: SensorGeometry) -> "ActiveMask":
        return cls(np.zeros(geometry.shape, dtype=bool), np.zeros(geometry.shape, dtype=bool))

    @classmethod
    def from_events(
        cls,
        events: Iterable[AugmentedEvent],
        t_now: int,
        geometry: SensorGeometry,
        current: Optional[Event] = None,
    ) -> "ActiveMask":
        """Mask of events active at ``t_now``; ``current`` is always marked active."""
        mask = cls.empty(geometry)
        for item in events:
            if item.is_active(t_now):
                mask.plane(item.event.polarity)[item.event.y, item.event.x] = True
        if current is not None:
            mask.plane(current.polarity)[current.y, current.x] = True
        return mask

    @property
    def shape(self) -> Tuple[int, int]:
        return self.on.shape

    def plane(self, polarity: Polarity) -> np.ndarray:
        return self.on if polarity is Polarity.ON else self.off

    def with_event(self, event: Event) -> "ActiveMask":
        """Copy with ``event``'s pixel set active in its polarity."""
        on, off = self.on.copy(), self.off.copy()
        (on if event.polarity is Polarity.ON else off)[event.y, event.x] = True
        return ActiveMask(on, off)


@dataclass(frozen=True, eq=False)
class EventDescriptor:
    """24 counts: bins 0..11 for ON orientations, 12..23 for OFF."""

    bins: np.ndarray

    def __post_init__(self) -> None:
        if self.bins.shape != (DESCRIPTOR_SIZE,):
            raise ValueError(f"Descriptor must have {DESCRIPTOR_SIZE} bins, got {self.bins.shape}")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EventDescriptor) and np.array_equal(self.bins, other.bins)

    def __hash__(self) -> int:
        return hash(tuple(int(v) for v in self.bins))

    @property
    def on(self) -> np.ndarray:
        return self.bins[:BIN_COUNT]

    @property
    def off(self) -> np.ndarray:
        return self.bins[BIN_COUNT:]

    def l1(self, other: "EventDescriptor") -> int:
        return int(np.abs(self.bins - other.bins).sum())


@dataclass(frozen=True, eq=False)
class DescriptorField:
    """Descriptors for every pixel of an inclusive region starting at (origin_x, origin_y)."""

    origin_x: int
    origin_y: int
    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x - self.origin_x < self.width and 0 <= y - self.origin_y < self.height

    def at(self, x: int, y: int) -> np.ndarray:
        return self.values[y - self.origin_y, x - self.origin_x]


def nearest_active_vector(
    mask: np.ndarray,
    pixel: Tuple[int, int],
    search_window: int,
) -> Optional[Tuple[int, int]]:
    """
    Offset from ``pixel`` to the nearest active pixel of a single-polarity mask.

    The search covers the square of half-side ``search_window``; pixels outside
    the mask are inactive. An active query pixel returns (0, 0).
    """
    if search_window < 1:
        raise ValueError("search_window must be >= 1")
    height, width = mask.shape
    px, py = pixel
    for dx, dy, _ in search_offsets(search_window):
        x, y = px + dx, py + dy
        if 0 <= x < width and 0 <= y < height and mask[y, x]:
            return dx, dy
    return None


def compute_descriptor(
    mask: ActiveMask,
    center: Tuple[int, int],
    n: int,
    search_window: Optional[int] = None,
) -> EventDescriptor:
    """
    Orientation histogram of nearest-active vectors over the N x N window at ``center``.

    Window pixels outside the sensor, pixels without an active pixel in reach and
    self vectors (0, 0) do not contribute.
    """
    if n < 3 or n % 2 == 0:
        raise ValueError(f"Descriptor window must be odd and >= 3, got {n}")
    radius = n if search_window is None else search_window
    height, width = mask.shape
    bins = np.zeros(DESCRIPTOR_SIZE, dtype=np.int64)
    half = n // 2
    cx, cy = center
    for offset, plane in ((0, mask.on), (BIN_COUNT, mask.off)):
        for y in range(cy - half, cy + half + 1):
            for x in range(cx - half, cx + half + 1):
                if not (0 <= x < width and 0 <= y < height):
                    continue
                vector = nearest_active_vector(plane, (x, y), radius)
                if vector is None or vector == (0, 0):
                    continue
                bins[offset + orientation_bin(*vector)] += 1
    return EventDescriptor(bins)


def _bin_codes(plane: np.ndarray, x0: int, y0: int, x1: int, y1: int, radius: int) -> np.ndarray:
    """Orientation bin of the nearest active vector for each pixel of a region (-1: none)."""
    height, width = plane.shape
    rows, cols = y1 - y0 + 1, x1 - x0 + 1
    padded = crop_region(plane, x0 - radius, y0 - radius, x1 + radius, y1 + radius, fill=False)
    codes = np.full((rows, cols), _UNASSIGNED, dtype=np.int16)
    if padded.any():
        for dx, dy, code in search_offsets(radius):
            candidate = padded[radius + dy : radius + dy + rows, radius + dx : radius + dx + cols]
            hit = candidate & (codes == _UNASSIGNED)
            if hit.any():
                codes[hit] = code
                if not (codes == _UNASSIGNED).any():
                    break
    codes[codes == _UNASSIGNED] = _UNDEFINED
    inside_y = (np.arange(y0, y1 + 1) >= 0) & (np.arange(y0, y1 + 1) < height)
    inside_x = (np.arange(x0, x1 + 1) >= 0) & (np.arange(x0, x1 + 1) < width)
    codes[~(inside_y[:, None] & inside_x[None, :])] = _UNDEFINED
    return codes


def descriptor_field(
    mask: ActiveMask,
    x0: int,
    y0: int,
    x1: int,
    y1: int,
    n: int,
    search_window: Optional[int] = None,
) -> DescriptorField:
    """Vectorised compute_descriptor for every pixel of the inclusive region."""
    radius = n if search_window is None else search_window
    half = n // 2
    parts = []
    for plane in (mask.on, mask.off):
        codes = _bin_codes(plane, x0 - half, y0 - half, x1 + half, y1 + half, radius)
        onehot = (codes[..., None] == np.arange(BIN_COUNT)).astype(np.int32)
        windows = sliding_window_view(onehot, (n, n), axis=(0, 1))
        parts.append(windows.sum(axis=(-2, -1)))
    return DescriptorField(x0, y0, np.concatenate(parts, axis=-1))
