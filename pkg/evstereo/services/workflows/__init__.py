"""Workflow orchestrators for the stereo lifetime pipelines."""

from .stereo_workflow import (
    Packet,
    PipelineMode,
    PipelineResult,
    PipelineStats,
    SensorState,
    StereoState,
    StereoWorkflow,
    match_lifetimed_streams,
    process_event_coupled,
    process_event_decoupled,
    process_event_fixed,
    run_monocular,
    schedule_packets,
)

__all__ = [
    "Packet",
    "PipelineMode",
    "PipelineResult",
    "PipelineStats",
    "SensorState",
    "StereoState",
    "StereoWorkflow",
    "match_lifetimed_streams",
    "process_event_coupled",
    "process_event_decoupled",
    "process_event_fixed",
    "run_monocular",
    "schedule_packets",
]
