import numpy as np

from evstereo.services.events import AugmentedEvent, Event, LifetimeSource, Polarity, SensorGeometry
from evstereo.services.render import (
    BACKGROUND,
    disparity_image,
    format_pgm,
    read_pgm,
    render_active_frame,
    write_active_frame,
    write_disparity_map,
)

GEOMETRY = SensorGeometry(width=6, height=4, max_disparity=5)


def _item(x, y, t, lifetime=1000, polarity=Polarity.ON, disparity=None):
    return AugmentedEvent(Event(x, y, t, polarity), lifetime, disparity, None, LifetimeSource.PLANE_FIT)


def test_empty_frame_is_uniform_gray():
    frame = render_active_frame([], 0, GEOMETRY)
    assert frame.shape == (4, 6)
    assert frame.dtype == np.uint8
    assert (frame == BACKGROUND).all()


def test_single_active_pixel():
    frame = render_active_frame([_item(2, 1, 100)], 500, GEOMETRY)
    assert frame[1, 2] == 255
    assert (frame != BACKGROUND).sum() == 1
    assert (render_active_frame([_item(2, 1, 100)], 1101, GEOMETRY) == BACKGROUND).all()


def test_noise_never_renders():
    noise = AugmentedEvent(Event(1, 1, 0))
    assert (render_active_frame([noise], 0, GEOMETRY) == BACKGROUND).all()


def test_latest_event_wins_and_on_beats_off_on_ties():
    later_off = [_item(3, 3, 100), _item(3, 3, 200, polarity=Polarity.OFF)]
    assert render_active_frame(later_off, 300, GEOMETRY)[3, 3] == 0
    tie = [_item(3, 3, 100), _item(3, 3, 100, polarity=Polarity.OFF)]
    assert render_active_frame(tie, 300, GEOMETRY)[3, 3] == 255
    assert render_active_frame(list(reversed(tie)), 300, GEOMETRY)[3, 3] == 255


def test_disparity_scaling():
    geometry = SensorGeometry(width=40, height=4, max_disparity=32)
    image = disparity_image([_item(1, 1, 0, disparity=5), _item(2, 1, 0)], 10, geometry)
    assert image[1, 1] == 40
    assert image[1, 2] == 0
    assert image.sum() == 40


def test_disparity_pixels_are_active_pixels():
    rng = np.random.default_rng(2)
    items = [
        _item(int(x), int(y), int(t), lifetime=int(l), disparity=int(d) if d >= 0 else None)
        for x, y, t, l, d in zip(
            rng.integers(0, 6, 40), rng.integers(0, 4, 40), rng.integers(0, 1000, 40),
            rng.integers(1, 500, 40), rng.integers(-3, 6, 40),
        )
    ]
    items.sort(key=lambda a: a.event.t)
    active = render_active_frame(items, 700, GEOMETRY)
    disparity = disparity_image(items, 700, GEOMETRY)
    assert np.all((disparity == 0) | (active != BACKGROUND))


def test_pgm_text_and_round_trip(tmp_path):
    frame = render_active_frame([_item(0, 0, 0)], 0, GEOMETRY)
    text = format_pgm(frame)
    assert text.splitlines()[:3] == ["P2", "6 4", "255"]
    assert text.splitlines()[3] == "255 128 128 128 128 128"

    path = tmp_path / "frames" / "left_active.pgm"
    written = write_active_frame([_item(0, 0, 0)], 0, GEOMETRY, path)
    assert np.array_equal(read_pgm(path), written)

    dpath = tmp_path / "frames" / "left_disparity.pgm"
    image = write_disparity_map([_item(4, 2, 0, disparity=5)], 0, GEOMETRY, dpath)
    assert read_pgm(dpath)[2, 4] == image[2, 4] == 255
