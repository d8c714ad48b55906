"""Gradient frames and disparity maps at arbitrary time instants."""

from pathlib import Path
from typing import Iterable, List, Union

import numpy as np

from .errors import PipelineIOError
from .events import AugmentedEvent, Polarity, SensorGeometry, active_events
from .utils.logging import get_logger

logger = get_logger(__name__)

BACKGROUND = 128
ON_VALUE = 255
OFF_VALUE = 0
MAX_GRAY = 255


def _latest_first_wins(events: Iterable[AugmentedEvent], t_now: int) -> List[AugmentedEvent]:
    # Painting order: later starts overwrite earlier ones, ON overwrites OFF at equal starts.
    return sorted(active_events(events, t_now), key=lambda a: (a.event.t, a.event.polarity.value))


def render_active_frame(events: Iterable[AugmentedEvent], t_now: int, geometry: SensorGeometry) -> np.ndarray:
    """
    Grayscale ``(height, width)`` uint8 frame of the events active at ``t_now``.

    Active ON pixels are 255, OFF pixels 0, everything else 128.
    """
    frame = np.full(geometry.shape, BACKGROUND, dtype=np.uint8)
    for item in _latest_first_wins(events, t_now):
        event = item.event
        frame[event.y, event.x] = ON_VALUE if event.polarity is Polarity.ON else OFF_VALUE
    return frame


def disparity_image(events: Iterable[AugmentedEvent], t_now: int, geometry: SensorGeometry) -> np.ndarray:
    """Active matched pixels store ``round(d * 255 / max_disparity)``; all others are 0."""
    image = np.zeros(geometry.shape, dtype=np.uint8)
    scale = MAX_GRAY / geometry.max_disparity
    for item in _latest_first_wins(events, t_now):
        event = item.event
        value = 0 if item.disparity is None else int(np.rint(min(item.disparity, geometry.max_disparity) * scale))
        image[event.y, event.x] = value
    return image


def format_pgm(image: np.ndarray) -> str:
    """ASCII (P2) portable graymap text with maxval 255."""
    height, width = image.shape
    rows = [" ".join(str(int(v)) for v in row) for row in image]
    return "\n".join(["P2", f"{width} {height}", str(MAX_GRAY), *rows]) + "\n"


def write_pgm(image: np.ndarray, path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_pgm(image))
    except OSError as exc:
        raise PipelineIOError(str(path), exc.strerror or str(exc)) from exc
    logger.info("Wrote %s", path)


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Parse a P2 file written by write_pgm."""
    path = Path(path)
    try:
        tokens = path.read_text().split()
    except OSError as exc:
        raise PipelineIOError(str(path), exc.strerror or str(exc)) from exc
    if not tokens or tokens[0] != "P2":
        raise PipelineIOError(str(path), "not a P2 graymap")
    width, height = int(tokens[1]), int(tokens[2])
    values = np.array([int(v) for v in tokens[4:]], dtype=np.uint8)
    return values.reshape(height, width)


def write_active_frame(
    events: Iterable[AugmentedEvent], t_now: int, geometry: SensorGeometry, path: Union[str, Path]
) -> np.ndarray:
    frame = render_active_frame(events, t_now, geometry)
    write_pgm(frame, path)
    return frame


def write_disparity_map(
    events: Iterable[AugmentedEvent], t_now: int, geometry: SensorGeometry, path: Union[str, Path]
) -> np.ndarray:
    """Write the disparity image at ``t_now`` as P2 and return it."""
    image = disparity_image(events, t_now, geometry)
    write_pgm(image, path)
    return image
