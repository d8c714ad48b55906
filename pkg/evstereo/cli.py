"""Command-line driver for the stereo event lifetime pipelines."""

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from dotenv import load_dotenv

from evstereo.services.config import PipelineConfig, dump_config, load_config, parse_overrides, settings
from evstereo.services.errors import ConfigError, EventFormatError, EvStereoError, PipelineIOError
from evstereo.services.events import Side
from evstereo.services.formats import (
    parse_event_file,
    write_augmented_events,
    write_events,
    write_ground_truth,
    write_json,
)
from evstereo.services.metrics import STATS_FILE, compare_files
from evstereo.services.render import write_active_frame, write_disparity_map
from evstereo.services.synth import EdgeScenario, generate_stereo_edge, sparsify
from evstereo.services.utils.logging import get_logger, set_level
from evstereo.services.workflows import PipelineMode, PipelineResult, StereoWorkflow

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_RUNTIME = 3

_PIPELINE_COMMANDS = {
    "run": PipelineMode.COUPLED,
    "run-decoupled": PipelineMode.DECOUPLED,
    "run-fixed": PipelineMode.FIXED,
}


def load_environment(env_paths: Optional[Iterable[Path]] = None) -> Optional[Path]:
    """
    Load environment variables from common .env locations.

    Order:
    1. ./.env
    2. ~/.evstereo/.env
    """
    candidates = list(env_paths or [Path.cwd() / ".env", Path.home() / ".evstereo" / ".env"])
    for env_path in candidates:
        if env_path.exists():
            logger.info("Loading environment from %s", env_path)
            load_dotenv(env_path)
            settings.reload()
            set_level(settings.LOG_LEVEL)
            return env_path

    logger.debug("No .env file found in default locations; relying on process env.")
    return None


class UsageArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_options(parser: argparse.ArgumentParser, top_level: bool = False) -> None:
    # Subcommand copies only set values that were given, leaving top-level ones intact.
    defaults = {"config": None, "overrides": [], "seed": None} if top_level else {}
    suppress = argparse.SUPPRESS
    parser.add_argument("--config", type=Path, default=defaults.get("config", suppress),
                        help="flat key = value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=defaults.get("overrides", suppress),
                        metavar="KEY=VALUE", help="override any config key (repeatable)")
    parser.add_argument("--seed", type=int, default=defaults.get("seed", suppress),
                        help="random seed (overrides the seed key)")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageArgumentParser(prog="evstereo", description=__doc__)
    parser.add_argument("--dump-config", action="store_true",
                        help="print the documented configuration (defaults plus --config/--set) and exit")
    _add_config_options(parser, top_level=True)
    commands = parser.add_subparsers(dest="command", parser_class=UsageArgumentParser)

    for name, mode in _PIPELINE_COMMANDS.items():
        sub = commands.add_parser(name, help=f"{mode.value} pipeline over a left/right event file pair")
        _add_config_options(sub)
        sub.add_argument("--left", help="left event file (overrides left_path)")
        sub.add_argument("--right", help="right event file (overrides right_path)")
        sub.add_argument("--output-dir", help="output directory (overrides output_dir)")

    synth = commands.add_parser("synth", help="generate a synthetic stereo edge scene")
    _add_config_options(synth)
    synth.add_argument("--vx", type=float, default=100.0, help="x velocity in px/s (inf to disable)")
    synth.add_argument("--vy", type=float, default=math.inf, help="y velocity in px/s (inf to disable)")
    synth.add_argument("--orientation", type=float, help="motion direction in degrees (with --speed)")
    synth.add_argument("--speed", type=float, help="normal speed in px/s (with --orientation)")
    synth.add_argument("--disparity", type=int, default=5, help="true disparity in pixels")
    synth.add_argument("--duration", type=float, default=2.0, help="scene duration in seconds")
    synth.add_argument("--noise-rate", type=float, default=0.0, help="noise events per second per sensor")
    synth.add_argument("--keep-right", type=float, default=1.0, help="fraction of right events kept")
    synth.add_argument("--output-dir", help="output directory (overrides output_dir)")

    compare = commands.add_parser("compare", help="compare two augmented event files")
    _add_config_options(compare)
    compare.add_argument("first", type=Path)
    compare.add_argument("second", type=Path)
    compare.add_argument("--truth", type=Path, help="ground-truth sidecar of the input stream")
    compare.add_argument("--output", type=Path, help="also write the report to this JSON file")
    return parser


def _config_from_args(args: argparse.Namespace, extra: Optional[dict] = None) -> PipelineConfig:
    overrides = parse_overrides(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    for key, value in (extra or {}).items():
        if value is not None:
            overrides[key] = value
    config = load_config(args.config, overrides)
    try:
        set_level(config.log_level)
    except ValueError as exc:
        raise ConfigError(str(exc), ["log_level"]) from exc
    return config


def _write_frames(result: PipelineResult, config: PipelineConfig, output_dir: Path) -> None:
    frames = output_dir / "frames"
    for t_us in config.render_times_us:
        for side in Side:
            name = side.name.lower()
            events = result.side(side)
            write_active_frame(events, t_us, config.geometry, frames / f"{name}_active_{t_us}.pgm")
            write_disparity_map(events, t_us, config.geometry, frames / f"{name}_disparity_{t_us}.pgm")


def run_pipeline(config: PipelineConfig, mode: PipelineMode) -> PipelineResult:
    """Read both event files, run the selected pipeline and write every output under output_dir."""
    if not config.left_path or not config.right_path:
        raise ConfigError("left_path and right_path are required", ["left_path", "right_path"])
    geometry = config.geometry
    left = parse_event_file(config.left_path, geometry, Side.LEFT)
    right = parse_event_file(config.right_path, geometry, Side.RIGHT)

    result = StereoWorkflow(config, mode).run(left, right)

    output_dir = Path(config.output_dir)
    include_lifetime = mode is not PipelineMode.FIXED
    write_augmented_events(result.left, output_dir / "left.txt", include_lifetime)
    write_augmented_events(result.right, output_dir / "right.txt", include_lifetime)
    write_json(result.stats, output_dir / STATS_FILE)
    _write_frames(result, config, output_dir)
    return result


def run_synth(args: argparse.Namespace, config: PipelineConfig) -> None:
    common = dict(
        true_disparity=args.disparity,
        duration_us=round(args.duration * 1_000_000),
        geometry=config.geometry,
        noise_rate=args.noise_rate,
        seed=config.seed,
    )
    if args.orientation is not None or args.speed is not None:
        if args.orientation is None or args.speed is None:
            raise ConfigError("--orientation and --speed must be given together")
        scenario = EdgeScenario.from_orientation(args.orientation, args.speed, **common)
    else:
        scenario = EdgeScenario(vx=args.vx, vy=args.vy, **common)

    left, right = generate_stereo_edge(scenario)
    right = sparsify(right, args.keep_right, [config.seed, Side.RIGHT.value, 1])

    output_dir = Path(config.output_dir)
    write_events(left.events, output_dir / "left.txt")
    write_events(right.events, output_dir / "right.txt")
    write_ground_truth(left.truth, output_dir / "left_truth.txt")
    write_ground_truth(right.truth, output_dir / "right_truth.txt")


def run_compare(args: argparse.Namespace, config: PipelineConfig) -> dict:
    report = compare_files(args.first, args.second, args.truth, config.geometry)
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.output is not None:
        write_json(report, args.output)
    return report


def _dispatch(args: argparse.Namespace) -> int:
    if args.command in _PIPELINE_COMMANDS:
        config = _config_from_args(
            args, {"left_path": args.left, "right_path": args.right, "output_dir": args.output_dir}
        )
        run_pipeline(config, _PIPELINE_COMMANDS[args.command])
    elif args.command == "synth":
        run_synth(args, _config_from_args(args, {"output_dir": args.output_dir}))
    else:
        run_compare(args, _config_from_args(args))
    return EXIT_OK


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv`` and run one subcommand.

    Returns:
        int: 0 on success, 1 for usage or configuration errors, 2 for malformed
        input files, 3 for runtime and I/O failures.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.dump_config:
            print(dump_config(_config_from_args(args)), end="")
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return _dispatch(args)
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_USAGE
    except EventFormatError as exc:
        logger.error("Input format error: %s", exc)
        return EXIT_FORMAT
    except (PipelineIOError, OSError) as exc:
        logger.error("I/O error: %s", exc)
        return EXIT_RUNTIME
    except EvStereoError as exc:
        logger.error("Pipeline error: %s", exc)
        return EXIT_RUNTIME


def main(argv: Optional[List[str]] = None) -> None:
    load_environment()
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
