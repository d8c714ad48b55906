"""API routes for running the stereo lifetime pipelines."""

from __future__ import annotations

from dataclasses import asdict

from flask import Blueprint, jsonify, request

from evstereo.services.config import PipelineConfig, dump_config
from evstereo.services.errors import ConfigError, EventFormatError
from evstereo.services.events import AugmentedEvent, Side
from evstereo.services.formats import parse_event_rows
from evstereo.services.lifetime import US_PER_SECOND
from evstereo.services.render import disparity_image, render_active_frame
from evstereo.services.utils.logging import get_logger
from evstereo.services.workflows import PipelineMode, PipelineResult, StereoWorkflow

api_bp = Blueprint("pipeline_api", __name__, url_prefix="/api")
logger = get_logger(__name__)


def _serialize_event(item: AugmentedEvent) -> dict:
    """Convert an AugmentedEvent into a JSON-friendly dict."""
    event = item.event
    return {
        "t": event.t,
        "x": event.x,
        "y": event.y,
        "polarity": event.polarity.value,
        "lifetime_us": item.lifetime_us,
        "disparity": item.disparity,
        "source": item.source.value,
    }


def _config_from_payload(payload: dict) -> PipelineConfig:
    overrides = payload.get("config") or {}
    if not isinstance(overrides, dict):
        raise ConfigError("config must be an object of key/value pairs")
    return PipelineConfig().with_overrides(overrides).validate()


def _mode_from_payload(payload: dict) -> PipelineMode:
    value = payload.get("mode", PipelineMode.COUPLED.value)
    try:
        return PipelineMode(value)
    except ValueError as exc:
        supported = [mode.value for mode in PipelineMode]
        raise ConfigError(f"Unsupported mode '{value}'", [f"mode must be one of {supported}"]) from exc


def _run_payload(payload: dict) -> tuple[PipelineConfig, PipelineResult]:
    config = _config_from_payload(payload)
    mode = _mode_from_payload(payload)
    geometry = config.geometry
    left = parse_event_rows(payload.get("left") or [], geometry, Side.LEFT, "left")
    right = parse_event_rows(payload.get("right") or [], geometry, Side.RIGHT, "right")
    return config, StereoWorkflow(config, mode).run(left, right)


def _error_response(exc: Exception):
    if isinstance(exc, ConfigError):
        return jsonify({"error": "Invalid configuration", "details": exc.details or [str(exc)]}), 400
    if isinstance(exc, EventFormatError):
        return jsonify({"error": "Invalid events", "details": [str(exc)]}), 400
    logger.exception("Pipeline request failed")
    return jsonify({"error": "Internal server error", "details": str(exc)}), 500


@api_bp.route("/config", methods=["GET"])
def get_config():
    """Return the default configuration as JSON and as a documented config file."""
    return jsonify({"defaults": asdict(PipelineConfig()), "text": dump_config()}), 200


@api_bp.route("/process", methods=["POST"])
def process():
    """
    Run a pipeline over the posted event streams.

    Expected JSON payload:
    {
        "left": [[t_sec, x, y, polarity], ...],
        "right": [[t_sec, x, y, polarity], ...],
        "mode": "coupled" | "decoupled" | "fixed",   # optional
        "config": {key: value}                        # optional overrides
    }
    """
    payload = request.get_json(silent=True) or {}
    try:
        _, result = _run_payload(payload)
    except Exception as exc:  # pylint: disable=broad-exception-caught
        return _error_response(exc)

    return (
        jsonify(
            {
                "left": [_serialize_event(item) for item in result.left],
                "right": [_serialize_event(item) for item in result.right],
                "stats": result.stats,
            }
        ),
        200,
    )


@api_bp.route("/frame", methods=["POST"])
def frame():
    """Run a pipeline and render the active frame and disparity map of one side at ``t_now`` seconds."""
    payload = request.get_json(silent=True) or {}
    try:
        if "t_now" not in payload:
            raise ConfigError("Missing t_now", ["t_now (seconds) is required"])
        try:
            t_now = round(float(payload["t_now"]) * US_PER_SECOND)
            side = Side[str(payload.get("side", "left")).upper()]
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError("Invalid t_now or side", [str(exc)]) from exc
        config, result = _run_payload(payload)
        events = result.side(side)
        active = render_active_frame(events, t_now, config.geometry)
        disparity = disparity_image(events, t_now, config.geometry)
    except Exception as exc:  # pylint: disable=broad-exception-caught
        return _error_response(exc)

    return (
        jsonify(
            {
                "t_now": t_now,
                "side": side.name.lower(),
                "active": active.tolist(),
                "disparity": disparity.tolist(),
            }
        ),
        200,
    )
