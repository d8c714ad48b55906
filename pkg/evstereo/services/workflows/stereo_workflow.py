"""Stereo event lifetime workflow: coupled, decoupled and fixed-interval pipelines."""

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import groupby
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..config import PipelineConfig
from ..descriptor import ActiveMask
from ..errors import EmptyWindowError
from ..events import (
    AugmentedEvent,
    Event,
    EventStore,
    LifetimeSource,
    Side,
    SurfaceOfActiveEvents,
    sae_update,
)
from ..lifetime import LifetimeEstimate, PlaneNormal, PlanePredictor, estimate_lifetime
from ..matching import match_event, reduce_lifetimes, shift_direction
from ..utils.logging import get_logger

logger = get_logger(__name__)

# Seed stream for the packet order draw; sensors use 0 and 1.
PACKET_ORDER_STREAM = 2


class PipelineMode(Enum):
    """Which pipeline drives lifetime estimation."""

    COUPLED = "coupled"
    DECOUPLED = "decoupled"
    FIXED = "fixed"


def store_mask(store: EventStore, t_now: int) -> ActiveMask:
    """Full-sensor ON/OFF activity of ``store`` at ``t_now``."""
    geometry = store.geometry
    on, off = store.active_region(t_now, 0, 0, geometry.width - 1, geometry.height - 1)
    return ActiveMask(on, off)


class SensorState:
    """SAE, plane predictor, recent-event store and frontier of one sensor."""

    def __init__(self, side: Side, config: PipelineConfig) -> None:
        geometry = config.geometry
        self.side = side
        self.sae = SurfaceOfActiveEvents(geometry)
        self.predictor = PlanePredictor(config.dt_max_us)
        self.store = EventStore(geometry, config.dt_max_us)
        # Last timestamp up to which this sensor's stream has been processed.
        self.frontier_us = -1
        self.rng = np.random.default_rng([config.seed, side.value])

    def active_mask(self, t_now: int) -> ActiveMask:
        return store_mask(self.store, t_now)


@dataclass
class SideStats:
    """Per-sensor counters."""

    events: int = 0
    lifetimed: int = 0
    noise: int = 0
    matched: int = 0
    lifetime_from_match: int = 0


@dataclass
class PipelineStats:
    """Counters and timing of a pipeline run."""

    mode: str = PipelineMode.COUPLED.value
    sides: Dict[str, SideStats] = field(
        default_factory=lambda: {side.name.lower(): SideStats() for side in Side}
    )
    match_attempts: int = 0
    lifetime_seconds: float = 0.0
    wall_seconds: float = 0.0

    def side(self, side: Side) -> SideStats:
        return self.sides[side.name.lower()]


class StereoState:
    """Everything the interleaved single-writer event loop owns."""

    def __init__(self, config: PipelineConfig, mode: PipelineMode = PipelineMode.COUPLED) -> None:
        self.config = config.validate()
        self.geometry = config.geometry
        self.mode = mode
        self.sensors = {side: SensorState(side, config) for side in Side}
        self.stats = PipelineStats(mode=mode.value)

    def sensor(self, side: Side) -> SensorState:
        return self.sensors[side]

    @property
    def plane_fit_count(self) -> int:
        return sum(sensor.predictor.fit_invocations for sensor in self.sensors.values())

    @property
    def match_count(self) -> int:
        return sum(item.matched for item in self.stats.sides.values())

    def stats_dict(self) -> dict:
        """JSON-friendly snapshot of counters, including predictor counters."""
        sides = {}
        for side, sensor in self.sensors.items():
            counters = self.stats.side(side)
            sides[side.name.lower()] = {
                "events": counters.events,
                "lifetimed": counters.lifetimed,
                "noise": counters.noise,
                "matched": counters.matched,
                "lifetime_from_match": counters.lifetime_from_match,
                "plane_fits": sensor.predictor.fit_invocations,
                "predictor_skips": sensor.predictor.skips,
                "planes_adopted": sensor.predictor.adopted,
            }
        return {
            "mode": self.stats.mode,
            "sides": sides,
            "plane_fits": self.plane_fit_count,
            "match_attempts": self.stats.match_attempts,
            "matches": self.match_count,
            "lifetime_seconds": self.stats.lifetime_seconds,
            "wall_seconds": self.stats.wall_seconds,
        }


@dataclass
class PipelineResult:
    """Augmented events per side (input order) plus run statistics."""

    left: List[AugmentedEvent]
    right: List[AugmentedEvent]
    stats: dict

    def side(self, side: Side) -> List[AugmentedEvent]:
        return self.left if side is Side.LEFT else self.right


@dataclass(frozen=True)
class Packet:
    """Events of one sensor whose timestamps fall in one packet slot."""

    side: Side
    slot: int
    end_us: int
    events: List[Event]


def _first_side(order: str, contested: int, rng: np.random.Generator) -> Side:
    if order == "left":
        return Side.LEFT
    if order == "right":
        return Side.RIGHT
    if order == "alternate":
        return Side.LEFT if contested % 2 == 0 else Side.RIGHT
    return Side.LEFT if rng.random() < 0.5 else Side.RIGHT


def schedule_packets(
    left: Sequence[Event],
    right: Sequence[Event],
    packet_us: int,
    order: str = "random",
    seed: int = 0,
) -> List[Packet]:
    """
    Cut both streams into packets of ``packet_us`` and order them for delivery.

    Packets go out slot by slot. When both sensors have a packet in the same
    slot, ``order`` decides which one is delivered first; the draw for
    ``random`` is seeded so runs stay reproducible. Events keep their input
    order within a packet.
    """
    slots: Dict[int, Dict[Side, List[Event]]] = {}
    for side, stream in ((Side.LEFT, left), (Side.RIGHT, right)):
        for event in stream:
            slots.setdefault(event.t // packet_us, {}).setdefault(side, []).append(event)

    rng = np.random.default_rng([seed, PACKET_ORDER_STREAM])
    packets: List[Packet] = []
    contested = 0
    for slot in sorted(slots):
        by_side = slots[slot]
        if len(by_side) == 2:
            first = _first_side(order, contested, rng)
            contested += 1
        else:
            first = next(iter(by_side))
        end_us = (slot + 1) * packet_us - 1
        for side in (first, first.other):
            if side in by_side:
                packets.append(Packet(side, slot, end_us, by_side[side]))
    return packets


def counterpart_available(state: StereoState, event: Event) -> bool:
    """True when the other sensor's stream has been processed up to ``event.t``."""
    return state.sensor(event.side.other).frontier_us >= event.t


def _match_against(state: StereoState, event: Event, own: EventStore, other: EventStore) -> Optional[int]:
    state.stats.match_attempts += 1
    disparity = match_event(
        store_mask(own, event.t).with_event(event),
        store_mask(other, event.t),
        (event.x, event.y),
        event.side,
        state.config.stereo,
        state.geometry,
    )
    if disparity is None:
        logger.debug("No confident match for %s event at (%s, %s, %s)", event.side.name, event.x, event.y, event.t)
    return disparity


def compute_disparity(state: StereoState, event: Event) -> Optional[int]:
    """Match ``event`` against the other sensor's active events at its arrival time."""
    return _match_against(state, event, state.sensor(event.side).store, state.sensor(event.side.other).store)


def _timed_estimate(state: StereoState, sensor: SensorState, event: Event) -> Optional[LifetimeEstimate]:
    started = time.perf_counter()
    estimate = estimate_lifetime(sensor.sae, sensor.predictor, event, state.config.ransac, sensor.rng)
    state.stats.lifetime_seconds += time.perf_counter() - started
    return estimate


def _matched_lifetime(state: StereoState, event: Event, disparity: int) -> Optional[int]:
    """Reduce lifetimes of active events in the matched window M of the other sensor."""
    other = state.sensor(event.side.other)
    match_x = event.x + shift_direction(event.side) * disparity
    started = time.perf_counter()
    lifetimes = other.store.lifetimes_in_window((match_x, event.y), state.config.match_window, event.t)
    try:
        lifetime = reduce_lifetimes(lifetimes, state.config.match_reducer)
    except EmptyWindowError:
        logger.debug("Empty matched window at (%s, %s); falling back to plane fitting", match_x, event.y)
        lifetime = None
    state.stats.lifetime_seconds += time.perf_counter() - started
    return lifetime


def adopt_counterpart_plane(state: StereoState, event: Event, disparity: int) -> Optional[PlaneNormal]:
    """
    Carry the other sensor's local plane over to the matched event's pixel.

    The other predictor is asked for a plane at the matched pixel and the
    event's own timestamp, so a plane is only adopted when it passes through
    the matched point; a wrong disparity finds none. The adopted plane then
    serves later lookups on this sensor like a fitted one.
    """
    match_x = event.x + shift_direction(event.side) * disparity
    if not state.geometry.contains(match_x, event.y):
        return None
    started = time.perf_counter()
    counterpart = Event(match_x, event.y, event.t, event.polarity, event.side.other)
    threshold = state.config.ransac.reliability_threshold_us
    plane = state.sensor(event.side.other).predictor.lookup(counterpart, threshold)
    if plane is not None:
        state.sensor(event.side).predictor.adopt(event.x, event.y, plane, event.x - match_x)
    state.stats.lifetime_seconds += time.perf_counter() - started
    return None if plane is None else plane.normal


def _commit(state: StereoState, sensor: SensorState, augmented: AugmentedEvent) -> AugmentedEvent:
    sensor.store.add(augmented)
    sensor.frontier_us = max(sensor.frontier_us, augmented.event.t)
    counters = state.stats.side(sensor.side)
    counters.events += 1
    if augmented.is_noise:
        counters.noise += 1
    else:
        counters.lifetimed += 1
    if augmented.disparity is not None:
        counters.matched += 1
    if augmented.source is LifetimeSource.MATCHED:
        counters.lifetime_from_match += 1
    return augmented


def _from_estimate(
    event: Event, estimate: Optional[LifetimeEstimate], disparity: Optional[int]
) -> AugmentedEvent:
    if estimate is None:
        return AugmentedEvent(event, None, disparity, None, LifetimeSource.NOISE)
    return AugmentedEvent(event, estimate.lifetime_us, disparity, estimate.normal, estimate.source)


def process_event_coupled(state: StereoState, event: Event) -> AugmentedEvent:
    """
    Single-shot lifetime and disparity for one event.

    When the other sensor has been processed up to the event's timestamp, the
    event is matched first; a confident match inherits the reduced lifetime of
    the matched window and adopts the other sensor's plane at the match.
    Otherwise, or on failure, the plane is fitted.
    """
    sensor = state.sensor(event.side)
    sae_update(sensor.sae, event)

    disparity = None
    if counterpart_available(state, event):
        disparity = compute_disparity(state, event)
        if disparity is not None:
            lifetime = _matched_lifetime(state, event, disparity)
            if lifetime is not None:
                normal = adopt_counterpart_plane(state, event, disparity)
                augmented = AugmentedEvent(event, lifetime, disparity, normal, LifetimeSource.MATCHED)
                return _commit(state, sensor, augmented)

    estimate = _timed_estimate(state, sensor, event)
    return _commit(state, sensor, _from_estimate(event, estimate, disparity))


def process_event_decoupled(state: StereoState, event: Event) -> AugmentedEvent:
    """Lifetime by plane fitting alone; ``match_lifetimed_streams`` adds disparities afterwards."""
    sensor = state.sensor(event.side)
    sae_update(sensor.sae, event)
    estimate = _timed_estimate(state, sensor, event)
    return _commit(state, sensor, _from_estimate(event, estimate, None))


def process_event_fixed(state: StereoState, event: Event) -> AugmentedEvent:
    """Fixed accumulation interval baseline: constant lifetime, same matching stack, no plane fits."""
    sensor = state.sensor(event.side)
    sae_update(sensor.sae, event)
    disparity = compute_disparity(state, event) if counterpart_available(state, event) else None
    augmented = AugmentedEvent(
        event, state.config.accumulation_interval_us, disparity, None, LifetimeSource.FIXED
    )
    return _commit(state, sensor, augmented)


def match_lifetimed_streams(
    state: StereoState, left: Sequence[AugmentedEvent], right: Sequence[AugmentedEvent]
) -> Tuple[List[AugmentedEvent], List[AugmentedEvent]]:
    """
    Disparity for every lifetimed event of both sensors, after lifetimes are known.

    Both streams are replayed in timestamp groups. A group is stored on both
    sides before any of its events is matched, so each event sees the other
    sensor's events up to and including its own timestamp. Noise is skipped.
    """
    outputs = {Side.LEFT: list(left), Side.RIGHT: list(right)}
    stores = {side: EventStore(state.geometry, state.config.dt_max_us) for side in Side}
    order = sorted(
        (item.event.t, side.value, index)
        for side, items in outputs.items()
        for index, item in enumerate(items)
    )
    for _, group in groupby(order, key=lambda key: key[0]):
        group = [(Side(side_value), index) for _, side_value, index in group]
        for side, index in group:
            stores[side].add(outputs[side][index])
        for side, index in group:
            item = outputs[side][index]
            if item.is_noise:
                continue
            disparity = _match_against(state, item.event, stores[side], stores[side.other])
            if disparity is not None:
                outputs[side][index] = replace(item, disparity=disparity)
                state.stats.side(side).matched += 1
    return outputs[Side.LEFT], outputs[Side.RIGHT]


_PROCESSORS = {
    PipelineMode.COUPLED: process_event_coupled,
    PipelineMode.DECOUPLED: process_event_decoupled,
    PipelineMode.FIXED: process_event_fixed,
}


class StereoWorkflow:
    """
    Orchestrator for a stereo run.

    Both streams arrive as packets of ``packet_us``; after a packet is
    processed its sensor's frontier moves to the end of the packet slot, which
    makes that sensor's events available as counterparts. Events are handed to
    the pipeline selected by ``mode`` one at a time on a single thread.
    """

    def __init__(self, config: PipelineConfig, mode: PipelineMode = PipelineMode.COUPLED) -> None:
        self.config = config
        self.mode = mode
        self.state = StereoState(config, mode)
        self._process = _PROCESSORS[mode]

    def process(self, event: Event) -> AugmentedEvent:
        return self._process(self.state, event)

    def run(self, left: Sequence[Event], right: Sequence[Event]) -> PipelineResult:
        """Process both streams to completion and return per-side outputs in input order."""
        outputs: Dict[Side, List[AugmentedEvent]] = {Side.LEFT: [], Side.RIGHT: []}
        logger.info(
            "Running %s pipeline on %s left / %s right events", self.mode.value, len(left), len(right)
        )
        started = time.perf_counter()
        packets = schedule_packets(
            left, right, self.config.packet_us, self.config.packet_order, self.config.seed
        )
        for packet in packets:
            for event in packet.events:
                outputs[packet.side].append(self.process(event))
            sensor = self.state.sensor(packet.side)
            sensor.frontier_us = max(sensor.frontier_us, packet.end_us)
        if self.mode is PipelineMode.DECOUPLED:
            outputs[Side.LEFT], outputs[Side.RIGHT] = match_lifetimed_streams(
                self.state, outputs[Side.LEFT], outputs[Side.RIGHT]
            )
        self.state.stats.wall_seconds += time.perf_counter() - started

        stats = self.state.stats_dict()
        logger.info(
            "Finished %s pipeline: %s plane fits, %s matches, lifetimed %s/%s left, %s/%s right",
            self.mode.value,
            stats["plane_fits"],
            stats["matches"],
            stats["sides"]["left"]["lifetimed"],
            len(left),
            stats["sides"]["right"]["lifetimed"],
            len(right),
        )
        return PipelineResult(outputs[Side.LEFT], outputs[Side.RIGHT], stats)


def run_monocular(
    events: Iterable[Event], config: PipelineConfig, side: Side = Side.LEFT
) -> List[AugmentedEvent]:
    """Plane-fitting lifetime estimation on one stream, without any stereo coupling."""
    sensor = SensorState(side, config.validate())
    params = config.ransac
    outputs: List[AugmentedEvent] = []
    for event in events:
        sae_update(sensor.sae, event)
        estimate = estimate_lifetime(sensor.sae, sensor.predictor, event, params, sensor.rng)
        outputs.append(_from_estimate(event, estimate, None))
    return outputs
