from dataclasses import replace

import numpy as np
import pytest

from evstereo.services.config import PipelineConfig
from evstereo.services.events import Event, LifetimeSource, Side
from evstereo.services.formats import AugmentedRecord
from evstereo.services.lifetime import CachedPlane, LocalFrame, PlaneNormal
from evstereo.services.metrics import disparity_agreement
from evstereo.services.render import render_active_frame
from evstereo.services.synth import sparsify
from evstereo.services.workflows import (
    PipelineMode,
    StereoState,
    StereoWorkflow,
    run_monocular,
    schedule_packets,
)
from evstereo.services.workflows.stereo_workflow import adopt_counterpart_plane, counterpart_available
from synthetic import edge_streams

LEFT, RIGHT = Side.LEFT, Side.RIGHT


def _run(config, mode, left, right):
    return StereoWorkflow(config, mode).run(left, right)


def _late(events, delay_us=1):
    return [replace(e, t=e.t + delay_us) for e in events]


def _matched(items):
    return [a for a in items if a.disparity is not None]


def _records(items):
    return [AugmentedRecord(a.event, a.lifetime_us, a.disparity, not a.is_noise) for a in items]


def test_packets_go_out_slot_by_slot():
    left = [Event(0, 0, 10, side=LEFT), Event(1, 0, 1500, side=LEFT)]
    right = [Event(0, 0, 20, side=RIGHT), Event(1, 0, 2500, side=RIGHT)]
    packets = schedule_packets(left, right, 1000, "right")
    assert [(p.side, p.slot, p.end_us) for p in packets] == [
        (RIGHT, 0, 999),
        (LEFT, 0, 999),
        (LEFT, 1, 1999),
        (RIGHT, 2, 2999),
    ]


def test_packets_keep_input_order():
    left = [Event(x, 0, 3, side=LEFT) for x in (4, 1, 9)]
    (packet,) = schedule_packets(left, [], 1000, "left")
    assert [e.x for e in packet.events] == [4, 1, 9]


def test_alternate_order_switches_on_shared_slots():
    left = [Event(0, 0, t, side=LEFT) for t in (0, 1000, 2000, 3000)]
    right = [Event(0, 0, t, side=RIGHT) for t in (0, 2000, 3000)]
    packets = schedule_packets(left, right, 1000, "alternate")
    assert [p.side for p in packets] == [LEFT, RIGHT, LEFT, RIGHT, LEFT, LEFT, RIGHT]


def test_random_order_is_seeded_and_mixes_sides():
    left = [Event(0, 0, 1000 * k, side=LEFT) for k in range(40)]
    right = [Event(0, 0, 1000 * k, side=RIGHT) for k in range(40)]
    first = schedule_packets(left, right, 1000, "random", seed=4)
    assert first == schedule_packets(left, right, 1000, "random", seed=4)
    assert {p.side for p in first[::2]} == {LEFT, RIGHT}


def test_counterpart_available_follows_frontier(small_config):
    state = StereoState(small_config)
    event = Event(5, 5, 100, side=LEFT)
    assert not counterpart_available(state, event)
    state.sensor(RIGHT).frontier_us = 99
    assert not counterpart_available(state, event)
    state.sensor(RIGHT).frontier_us = 100
    assert counterpart_available(state, event)


def test_frontier_reaches_end_of_packet_slot(small_config):
    workflow = StereoWorkflow(small_config, PipelineMode.COUPLED)
    workflow.run([Event(1, 1, 2_010, side=LEFT)], [])
    assert workflow.state.sensor(LEFT).frontier_us == 2_999
    assert counterpart_available(workflow.state, Event(3, 1, 2_999, side=RIGHT))
    assert not counterpart_available(workflow.state, Event(3, 1, 3_000, side=RIGHT))


def test_coupled_without_right_stream_equals_monocular(small_config):
    left, _ = edge_streams()
    result = _run(small_config, PipelineMode.COUPLED, left.events, [])
    assert result.left == run_monocular(left.events, small_config)
    assert result.right == []
    assert result.stats["match_attempts"] == 0


def test_outputs_keep_input_order(small_config):
    left, right = edge_streams()
    result = _run(small_config, PipelineMode.COUPLED, left.events, right.events)
    assert [a.event for a in result.left] == left.events
    assert [a.event for a in result.right] == right.events


def test_counterparts_match_without_equal_timestamps(small_config):
    left, right = edge_streams()
    late_right = _late(right.events)
    coupled = _run(small_config, PipelineMode.COUPLED, left.events, late_right)
    decoupled = _run(small_config, PipelineMode.DECOUPLED, left.events, late_right)
    assert coupled.stats["match_attempts"] > 0
    assert coupled.stats["sides"]["left"]["lifetime_from_match"] > 0
    assert coupled.stats["sides"]["right"]["lifetime_from_match"] > 0
    assert coupled.stats["plane_fits"] < decoupled.stats["plane_fits"]


@pytest.mark.parametrize("order, waiting", [("left", RIGHT), ("right", LEFT)])
def test_packet_order_decides_which_sensor_matches(small_config, order, waiting):
    left, right = edge_streams()
    config = replace(small_config, packet_order=order)
    stats = _run(config, PipelineMode.COUPLED, left.events, right.events).stats
    assert stats["sides"][waiting.name.lower()]["matched"] > 0
    assert stats["sides"][waiting.other.name.lower()]["matched"] == 0


def test_matched_events_adopt_counterpart_planes(small_config):
    left, right = edge_streams()
    result = _run(small_config, PipelineMode.COUPLED, left.events, right.events)
    inherited = [a for a in result.left + result.right if a.source is LifetimeSource.MATCHED]
    assert inherited
    assert any(a.normal is not None for a in inherited)
    assert sum(side["planes_adopted"] for side in result.stats["sides"].values()) > 0


def test_wrong_disparity_adopts_no_plane(small_config):
    state = StereoState(small_config)
    plane = CachedPlane(PlaneNormal(-0.1, 0.0, 10.0), LocalFrame(4, 3, -50_000), 50_000)
    state.sensor(RIGHT).predictor.store(4, 3, plane)
    event = Event(9, 3, 50_000, side=LEFT)

    assert adopt_counterpart_plane(state, event, 6) is None
    assert state.sensor(LEFT).predictor.get(9, 3) is None

    assert adopt_counterpart_plane(state, event, 5) == plane.normal
    adopted = state.sensor(LEFT).predictor.get(9, 3)
    assert adopted.predict_us(10, 3) == pytest.approx(60_000, abs=1e-3)


def test_fixed_mode_assigns_accumulation_interval(small_config):
    left, right = edge_streams()
    result = _run(small_config, PipelineMode.FIXED, left.events, right.events)
    everything = result.left + result.right
    assert all(a.lifetime_us == small_config.accumulation_interval_us for a in everything)
    assert all(a.source is LifetimeSource.FIXED for a in everything)
    assert result.stats["plane_fits"] == 0
    assert result.stats["match_attempts"] > 0


def test_decoupled_fits_or_predicts_every_event(small_config):
    left, right = edge_streams()
    stats = _run(small_config, PipelineMode.DECOUPLED, left.events, right.events).stats
    for name, stream in (("left", left), ("right", right)):
        side = stats["sides"][name]
        assert side["events"] == len(stream)
        assert side["plane_fits"] + side["predictor_skips"] == side["events"]
        assert side["lifetimed"] + side["noise"] == side["events"]


def test_decoupled_matches_both_sensors_after_lifetimes(small_config):
    left, right = edge_streams()
    result = _run(small_config, PipelineMode.DECOUPLED, left.events, right.events)
    for name, items in (("left", result.left), ("right", result.right)):
        matched = _matched(items)
        assert matched
        assert result.stats["sides"][name]["matched"] == len(matched)
        assert np.median([a.disparity for a in matched]) == 5
    assert all(a.disparity is None for a in result.left + result.right if a.is_noise)


def test_runs_are_deterministic(small_config):
    left, right = edge_streams(noise_rate=200.0, seed=3)
    first = _run(small_config, PipelineMode.COUPLED, left.events, right.events)
    second = _run(small_config, PipelineMode.COUPLED, left.events, right.events)
    assert first.left == second.left
    assert first.right == second.right


def _row_width(frame, row):
    return int((frame[row] != 128).sum())


def test_lifetimes_keep_fast_edges_thin():
    config = PipelineConfig(width=40, height=20, max_disparity=8)
    left, _ = edge_streams(vx=300.0)
    t_now = next(e.t for e in left.events if e.x == 20) + 1000

    lifetimed = run_monocular(left.events, config)
    fixed = _run(config, PipelineMode.FIXED, left.events, []).left

    assert _row_width(render_active_frame(lifetimed, t_now, config.geometry), 10) == 1
    assert _row_width(render_active_frame(fixed, t_now, config.geometry), 10) == 3


def _scene(kind):
    left, right = edge_streams(noise_rate=200.0 if kind == "noisy" else 0.0, seed=1)
    if kind == "late right":
        return left.events, _late(right.events, 300)
    if kind == "sparse right":
        return left.events, sparsify(right, 0.5, seed=2).events
    return left.events, right.events


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["dense", "late right", "noisy", "sparse right"])
@pytest.mark.parametrize("order", ["random", "alternate"])
def test_coupling_never_adds_plane_fits(small_config, kind, order):
    left, right = _scene(kind)
    config = replace(small_config, packet_order=order)
    coupled = _run(config, PipelineMode.COUPLED, left, right)
    decoupled = _run(config, PipelineMode.DECOUPLED, left, right)
    assert coupled.stats["plane_fits"] <= decoupled.stats["plane_fits"]


@pytest.fixture(scope="module")
def wide_edge_runs():
    config = PipelineConfig(width=64, height=40, max_disparity=32)
    left, right = edge_streams(width=64, height=40, max_disparity=32)
    coupled = _run(config, PipelineMode.COUPLED, left.events, right.events)
    decoupled = _run(config, PipelineMode.DECOUPLED, left.events, right.events)
    return coupled, decoupled


@pytest.mark.slow
def test_coupling_cuts_plane_fits_and_time(wide_edge_runs):
    coupled, decoupled = wide_edge_runs
    assert coupled.stats["plane_fits"] <= 0.6 * decoupled.stats["plane_fits"]
    assert coupled.stats["wall_seconds"] <= 0.75 * decoupled.stats["wall_seconds"]
    assert coupled.stats["sides"]["left"]["lifetime_from_match"] > 0
    assert coupled.stats["sides"]["right"]["lifetime_from_match"] > 0


@pytest.mark.slow
def test_coupled_disparities_recover_true_shift(wide_edge_runs):
    coupled, _ = wide_edge_runs
    matched = _matched(coupled.left + coupled.right)
    assert len(matched) >= 0.7 * coupled.stats["match_attempts"]
    errors = np.abs(np.array([a.disparity for a in matched]) - 5)
    assert np.mean(errors == 0) >= 0.8
    assert np.mean(errors <= 1) >= 0.95


@pytest.mark.slow
def test_matched_lifetimes_come_from_counterpart_window(wide_edge_runs):
    coupled, _ = wide_edge_runs
    inherited = [a for a in coupled.left + coupled.right if a.source is LifetimeSource.MATCHED]
    assert inherited
    assert sum(1 for a in inherited if abs(a.lifetime_us - 10_000) <= 1_000) >= 0.9 * len(inherited)


@pytest.mark.slow
def test_coupled_and_decoupled_disparities_agree(wide_edge_runs):
    coupled, decoupled = wide_edge_runs
    agreement = disparity_agreement(
        _records(coupled.left + coupled.right), _records(decoupled.left + decoupled.right)
    )
    assert agreement["common_matched"] > 0
    assert agreement["within_1px"] >= 0.9


@pytest.mark.slow
def test_coupling_lifts_sparse_sensor():
    config = PipelineConfig(width=48, height=24, max_disparity=16, window_n=3)
    gains = []
    for seed in range(5):
        left, right = edge_streams(width=48, height=24, max_disparity=16, noise_rate=20.0, seed=seed)
        sparse_right = sparsify(right, 0.5, seed=[seed, 1]).events
        seeded = replace(config, seed=seed)
        coupled = _run(seeded, PipelineMode.COUPLED, left.events, sparse_right)
        decoupled = _run(seeded, PipelineMode.DECOUPLED, left.events, sparse_right)
        gains.append(
            coupled.stats["sides"]["right"]["lifetimed"] / max(decoupled.stats["sides"]["right"]["lifetimed"], 1)
        )
    assert sum(gain >= 1.2 for gain in gains) >= 4, gains
