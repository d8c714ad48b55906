"""
Text file formats.

Event files hold one ``t_sec x y polarity`` line per event. Augmented files add
``tau_sec disparity flag`` (the fixed-interval variant omits ``tau_sec``).
Ground-truth sidecars hold ``index tau_us disparity flag``. Times are written
with exactly six fractional digits; ``-`` marks a missing value.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

from .errors import EventFormatError, PipelineIOError
from .events import AugmentedEvent, Event, Polarity, SensorGeometry, Side
from .lifetime import US_PER_SECOND
from .synth import GroundTruthRecord
from .utils.logging import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]

MISSING = "-"
FLAG_OK = "ok"
FLAG_NOISE = "noise"


@dataclass(frozen=True)
class AugmentedRecord:
    """One parsed line of an augmented-event file."""

    event: Event
    lifetime_us: Optional[int]
    disparity: Optional[int]
    ok: bool

    @property
    def matched(self) -> bool:
        return self.disparity is not None


def format_seconds(t_us: int) -> str:
    """Microseconds as seconds with six fractional digits, without float rounding."""
    sign = "-" if t_us < 0 else ""
    whole, frac = divmod(abs(int(t_us)), US_PER_SECOND)
    return f"{sign}{whole}.{frac:06d}"


def parse_seconds(text: str) -> int:
    """Decimal seconds to integer microseconds."""
    return int(round(float(text) * US_PER_SECOND))


def _read_lines(path: Path) -> List[str]:
    try:
        return path.read_text().splitlines()
    except OSError as exc:
        raise PipelineIOError(str(path), exc.strerror or str(exc)) from exc


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as handle:
            for line in lines:
                handle.write(line)
                handle.write("\n")
    except OSError as exc:
        raise PipelineIOError(str(path), exc.strerror or str(exc)) from exc


def _data_lines(lines: Sequence[str]):
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield number, line.split()


def _parse_event_fields(tokens: List[str], path: Union[str, Path], number: int, geometry: SensorGeometry, side: Side) -> Event:
    try:
        t = parse_seconds(tokens[0])
        x, y, p = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except (ValueError, IndexError, OverflowError) as exc:
        raise EventFormatError(EventFormatError.MALFORMED_LINE, str(path), number, str(exc)) from exc
    if t < 0 or p not in (0, 1):
        raise EventFormatError(EventFormatError.MALFORMED_LINE, str(path), number, "negative time or bad polarity")
    if not geometry.contains(x, y):
        raise EventFormatError(
            EventFormatError.OUT_OF_BOUNDS, str(path), number, f"({x}, {y}) outside {geometry.width}x{geometry.height}"
        )
    return Event(x, y, t, Polarity(p), side)


def parse_event_file(
    path: PathLike,
    geometry: Optional[SensorGeometry] = None,
    side: Side = Side.LEFT,
) -> List[Event]:
    """
    Read a ``t_sec x y polarity`` event file.

    Blank lines and ``#`` comments are skipped; timestamps must not decrease.

    Raises:
        EventFormatError: MALFORMED_LINE, NON_MONOTONIC_TIMESTAMP or OUT_OF_BOUNDS with the line number.
        PipelineIOError: If the file cannot be read.
    """
    path = Path(path)
    events = _build_events(_data_lines(_read_lines(path)), str(path), geometry or SensorGeometry(), side)
    logger.info("Read %s events from %s", len(events), path)
    return events


def parse_event_rows(
    rows: Sequence[Sequence[object]],
    geometry: Optional[SensorGeometry] = None,
    side: Side = Side.LEFT,
    source: str = "<rows>",
) -> List[Event]:
    """Same checks as parse_event_file over in-memory ``[t_sec, x, y, polarity]`` rows."""
    if not isinstance(rows, (list, tuple)):
        raise EventFormatError(EventFormatError.MALFORMED_LINE, source, 0, "expected a list of rows")
    numbered = []
    for number, row in enumerate(rows, start=1):
        if not isinstance(row, (list, tuple)):
            raise EventFormatError(EventFormatError.MALFORMED_LINE, source, number, "expected a list")
        numbered.append((number, [str(value) for value in row]))
    return _build_events(numbered, source, geometry or SensorGeometry(), side)


def _build_events(numbered_tokens, source: str, geometry: SensorGeometry, side: Side) -> List[Event]:
    events: List[Event] = []
    previous = -1
    for number, tokens in numbered_tokens:
        if len(tokens) != 4:
            raise EventFormatError(EventFormatError.MALFORMED_LINE, source, number, f"expected 4 fields, got {len(tokens)}")
        event = _parse_event_fields(tokens, source, number, geometry, side)
        if event.t < previous:
            raise EventFormatError(
                EventFormatError.NON_MONOTONIC_TIMESTAMP, source, number, f"{event.t} us after {previous} us"
            )
        previous = event.t
        events.append(event)
    return events


def format_event(event: Event) -> str:
    return f"{format_seconds(event.t)} {event.x} {event.y} {event.polarity.value}"


def write_events(events: Iterable[Event], path: PathLike) -> None:
    path = Path(path)
    _write_lines(path, (format_event(event) for event in events))
    logger.info("Wrote events to %s", path)


def format_augmented(item: AugmentedEvent, include_lifetime: bool = True) -> str:
    fields = [format_event(item.event)]
    if include_lifetime:
        fields.append(MISSING if item.lifetime_us is None else format_seconds(item.lifetime_us))
    fields.append(MISSING if item.disparity is None else str(item.disparity))
    fields.append(FLAG_NOISE if item.is_noise else FLAG_OK)
    return " ".join(fields)


def write_augmented_events(
    events: Iterable[AugmentedEvent],
    path: PathLike,
    include_lifetime: bool = True,
) -> None:
    """
    Write ``t_sec x y polarity tau_sec disparity flag`` lines.

    ``include_lifetime=False`` writes the fixed-interval variant without ``tau_sec``.

    Raises:
        PipelineIOError: If the file cannot be written.
    """
    path = Path(path)
    _write_lines(path, (format_augmented(item, include_lifetime) for item in events))
    logger.info("Wrote augmented events to %s", path)


def _optional(token: str, parse):
    return None if token == MISSING else parse(token)


def parse_augmented_events(
    path: PathLike,
    geometry: Optional[SensorGeometry] = None,
    side: Side = Side.LEFT,
) -> List[AugmentedRecord]:
    """Read an augmented file in either the 7-column or the 6-column (fixed-interval) layout."""
    path = Path(path)
    geometry = geometry or SensorGeometry()
    records: List[AugmentedRecord] = []
    for number, tokens in _data_lines(_read_lines(path)):
        if len(tokens) not in (6, 7) or tokens[-1] not in (FLAG_OK, FLAG_NOISE):
            raise EventFormatError(EventFormatError.MALFORMED_LINE, str(path), number, "not an augmented event line")
        event = _parse_event_fields(tokens[:4], path, number, geometry, side)
        try:
            lifetime = _optional(tokens[4], parse_seconds) if len(tokens) == 7 else None
            disparity = _optional(tokens[-2], int)
        except ValueError as exc:
            raise EventFormatError(EventFormatError.MALFORMED_LINE, str(path), number, str(exc)) from exc
        records.append(AugmentedRecord(event, lifetime, disparity, tokens[-1] == FLAG_OK))
    return records


def write_ground_truth(records: Iterable[GroundTruthRecord], path: PathLike) -> None:
    """Write the ``index tau_us disparity flag`` sidecar of a synthetic stream."""
    def line(record: GroundTruthRecord) -> str:
        tau = MISSING if record.tau_us is None else f"{record.tau_us:.3f}"
        disparity = MISSING if record.disparity is None else str(record.disparity)
        return f"{record.index} {tau} {disparity} {FLAG_NOISE if record.noise else FLAG_OK}"

    path = Path(path)
    _write_lines(path, (line(record) for record in records))
    logger.info("Wrote ground truth to %s", path)


def parse_ground_truth(path: PathLike) -> List[GroundTruthRecord]:
    path = Path(path)
    records: List[GroundTruthRecord] = []
    for number, tokens in _data_lines(_read_lines(path)):
        try:
            index, tau, disparity, flag = tokens
            if flag not in (FLAG_OK, FLAG_NOISE):
                raise ValueError(f"unknown flag {flag!r}")
            records.append(
                GroundTruthRecord(int(index), _optional(tau, float), _optional(disparity, int), flag == FLAG_NOISE)
            )
        except ValueError as exc:
            raise EventFormatError(EventFormatError.MALFORMED_LINE, str(path), number, str(exc)) from exc
    return records


def write_json(payload: dict, path: PathLike) -> None:
    path = Path(path)
    _write_lines(path, [json.dumps(payload, indent=2, sort_keys=True)])
    logger.info("Wrote %s", path)


def read_json(path: PathLike) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise PipelineIOError(str(path), exc.strerror or str(exc)) from exc
