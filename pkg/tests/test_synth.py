import math

import pytest

from evstereo.services.errors import ConfigError
from evstereo.services.events import Polarity, SensorGeometry, Side
from evstereo.services.synth import EdgeScenario, add_noise, generate_stereo_edge, sparsify
from synthetic import edge_streams


def test_vertical_edge_crosses_columns_every_tau():
    left, _ = edge_streams()
    assert all(e.t == e.x * 10_000 for e in left.events)
    assert all(g.tau_us == pytest.approx(10_000) and g.disparity == 5 for g in left.truth)
    assert {e.polarity for e in left.events} == {Polarity.ON}


def test_right_stream_is_left_shifted_by_disparity():
    left, right = edge_streams(disparity=5)
    shifted = {(e.x - 5, e.y, e.t) for e in left.events if e.x >= 5}
    assert {(e.x, e.y, e.t) for e in right.events} == shifted
    assert all(e.side is Side.RIGHT for e in right.events)


def test_streams_are_time_ordered():
    left, right = edge_streams(vx=150.0, vy=-90.0)
    for stream in (left, right):
        times = [e.t for e in stream.events]
        assert times == sorted(times)
        assert [g.index for g in stream.truth] == list(range(len(stream)))


def test_diagonal_edge_lifetime():
    scenario = EdgeScenario(vx=100.0, vy=100.0, geometry=SensorGeometry(40, 20, max_disparity=8))
    assert scenario.tau_seconds * 1e6 == pytest.approx(14142.1356, abs=1e-3)
    assert scenario.orientation_deg == pytest.approx(45.0)


@pytest.mark.parametrize("orientation", [0.0, 30.0, 90.0, 135.0, 200.0])
def test_orientation_round_trip(orientation):
    scenario = EdgeScenario.from_orientation(orientation, 80.0, geometry=SensorGeometry(40, 20, max_disparity=8))
    assert scenario.orientation_deg == pytest.approx(orientation)
    assert scenario.normal_speed == pytest.approx(80.0)
    assert scenario.tau_seconds == pytest.approx(1 / 80.0)


def test_edge_entering_from_the_right_is_off():
    scenario = EdgeScenario(vx=-100.0, geometry=SensorGeometry(40, 20, max_disparity=8), duration_us=390_000)
    left, _ = generate_stereo_edge(scenario)
    assert {e.polarity for e in left.events} == {Polarity.OFF}
    assert min(left.events, key=lambda e: e.t).x == 39


@pytest.mark.parametrize(
    "kwargs",
    [
        {"vx": 0.0},
        {"vx": math.inf, "vy": math.inf},
        {"vx": math.nan},
        {"true_disparity": 9},
        {"duration_us": -1},
        {"noise_rate": -5.0},
    ],
)
def test_invalid_scenarios(kwargs):
    with pytest.raises(ConfigError):
        EdgeScenario(geometry=SensorGeometry(40, 20, max_disparity=8), **kwargs)


def test_zero_noise_rate_is_identity():
    left, _ = edge_streams()
    assert add_noise(left, 0.0, seed=1) is left


def test_noise_count_follows_rate():
    geometry = SensorGeometry(40, 20, max_disparity=8)
    left, _ = edge_streams()
    noisy = add_noise(left, 2000.0, seed=4, geometry=geometry, start_us=0, end_us=1_000_000)
    injected = sum(1 for g in noisy.truth if g.noise)
    assert abs(injected - 2000) <= 179
    assert len(noisy) == len(left) + injected
    assert all(g.tau_us is None and g.disparity is None for g in noisy.truth if g.noise)


def test_noise_is_deterministic_under_seed():
    left, _ = edge_streams()
    first = add_noise(left, 500.0, seed=[7, 0])
    second = add_noise(left, 500.0, seed=[7, 0])
    assert first.events == second.events


def test_scenario_noise_is_added_per_side():
    left, right = edge_streams(noise_rate=1000.0, seed=2)
    assert any(g.noise for g in left.truth)
    assert any(g.noise for g in right.truth)


def test_sparsify_keeps_expected_fraction():
    left, _ = edge_streams(width=100, height=100, max_disparity=8, vx=1000.0)
    assert len(left) == 10_000
    kept = sparsify(left, 0.5, seed=9)
    assert abs(len(kept) - 5000) <= 200
    assert sparsify(left, 0.5, seed=9).events == kept.events
    assert set(kept.events) <= set(left.events)


def test_sparsify_edge_cases():
    left, _ = edge_streams()
    assert sparsify(left, 1.0) is left
    with pytest.raises(ValueError):
        sparsify(left, 0.0)
    with pytest.raises(ValueError):
        sparsify(left, 1.5)
