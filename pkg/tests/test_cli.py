import json

import pytest

from evstereo.cli import EXIT_FORMAT, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, run_cli
from evstereo.services.config import PipelineConfig, dump_config
from evstereo.services.errors import NonMonotonicTimestampError

SMALL = ["--set", "width=30", "--set", "height=20", "--set", "max_disparity=8"]


@pytest.fixture
def scene(tmp_path):
    out = tmp_path / "scene"
    assert run_cli(["synth", *SMALL, "--duration", "0.29", "--output-dir", str(out)]) == EXIT_OK
    return out


def test_dump_config_prints_defaults(capsys):
    assert run_cli(["--dump-config"]) == EXIT_OK
    assert capsys.readouterr().out == dump_config()


def test_dump_config_applies_overrides(capsys):
    assert run_cli(["--dump-config", "--set", "seed=5", "--seed", "7"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "seed = 7" in out
    assert out == dump_config(PipelineConfig(seed=7))


def test_synth_writes_streams_and_truth(scene):
    for name in ("left.txt", "right.txt", "left_truth.txt", "right_truth.txt"):
        assert (scene / name).exists()
    left_lines = (scene / "left.txt").read_text().splitlines()
    assert len(left_lines) == 30 * 20
    assert len((scene / "left_truth.txt").read_text().splitlines()) == len(left_lines)


def test_run_then_compare(scene, tmp_path, capsys):
    coupled, decoupled = tmp_path / "coupled", tmp_path / "decoupled"
    files = ["--left", str(scene / "left.txt"), "--right", str(scene / "right.txt")]
    assert run_cli(["run", *SMALL, *files, "--output-dir", str(coupled)]) == EXIT_OK
    assert run_cli(["run-decoupled", *SMALL, *files, "--output-dir", str(decoupled)]) == EXIT_OK
    capsys.readouterr()

    report_path = tmp_path / "report.json"
    assert (
        run_cli(
            [
                "compare",
                *SMALL,
                str(coupled / "left.txt"),
                str(decoupled / "left.txt"),
                "--truth",
                str(scene / "left_truth.txt"),
                "--output",
                str(report_path),
            ]
        )
        == EXIT_OK
    )
    report = json.loads(capsys.readouterr().out)
    assert report == json.loads(report_path.read_text())

    lines = (coupled / "left.txt").read_text().splitlines()
    assert report["a"]["events"] == len(lines) == 600
    assert report["a"]["lifetimed"] == sum(1 for line in lines if line.endswith(" ok"))
    assert report["plane_fit_ratio"] is not None
    assert report["wall_time_ratio"] is not None
    assert report["ground_truth"]["a"]["lifetimes_scored"] > 0

    stats = json.loads((coupled / "stats.json").read_text())
    assert stats["mode"] == "coupled"
    assert stats["sides"]["left"]["events"] == 600


def test_run_fixed_writes_six_columns(scene, tmp_path):
    out = tmp_path / "fixed"
    args = ["run-fixed", *SMALL, "--left", str(scene / "left.txt"), "--right", str(scene / "right.txt")]
    assert run_cli([*args, "--output-dir", str(out)]) == EXIT_OK
    lines = (out / "right.txt").read_text().splitlines()
    assert lines and all(len(line.split()) == 6 for line in lines)


def test_render_times_write_frames(scene, tmp_path):
    out = tmp_path / "frames_run"
    args = ["run", *SMALL, "--left", str(scene / "left.txt"), "--right", str(scene / "right.txt")]
    assert run_cli([*args, "--set", "render_times=0.1,0.2", "--output-dir", str(out)]) == EXIT_OK
    frames = sorted(p.name for p in (out / "frames").iterdir())
    assert "left_active_100000.pgm" in frames
    assert "right_disparity_200000.pgm" in frames
    assert len(frames) == 8


def test_unknown_key_is_usage_error(tmp_path):
    assert run_cli(["run", "--set", "bogus=1", "--left", "a", "--right", "b"]) == EXIT_USAGE


def test_bad_usage_exit_code():
    assert run_cli(["frobnicate"]) == EXIT_USAGE
    assert run_cli([]) == EXIT_USAGE


def test_malformed_input_exit_code(tmp_path):
    left = tmp_path / "left.txt"
    right = tmp_path / "right.txt"
    left.write_text("0.1 1 1 1\nnot an event\n")
    right.write_text("0.1 1 1 1\n")
    args = ["run", "--left", str(left), "--right", str(right), "--output-dir", str(tmp_path / "out")]
    assert run_cli(args) == EXIT_FORMAT


def test_missing_input_exit_code(tmp_path):
    right = tmp_path / "right.txt"
    right.write_text("0.1 1 1 1\n")
    args = ["run", "--left", str(tmp_path / "absent.txt"), "--right", str(right)]
    assert run_cli([*args, "--output-dir", str(tmp_path / "out")]) == EXIT_RUNTIME


def test_pixel_time_going_backwards_is_a_runtime_error(tmp_path, monkeypatch):
    def rewind(self, left, right):
        raise NonMonotonicTimestampError("Timestamp 5 older than stored 9 at (1, 1)")

    monkeypatch.setattr("evstereo.cli.StereoWorkflow.run", rewind)
    for name in ("left.txt", "right.txt"):
        (tmp_path / name).write_text("0.1 1 1 1\n")
    args = ["run", "--left", str(tmp_path / "left.txt"), "--right", str(tmp_path / "right.txt")]
    assert run_cli([*args, "--output-dir", str(tmp_path / "out")]) == EXIT_RUNTIME


def test_config_file_and_overrides(tmp_path, capsys):
    config = tmp_path / "evstereo.conf"
    config.write_text("width = 64\nmatch_reducer = mean\n")
    assert run_cli(["--dump-config", "--config", str(config), "--set", "width=80"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "width = 80" in out
    assert "match_reducer = mean" in out
