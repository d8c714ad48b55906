"""Comparison report between two augmented-event files."""

from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .events import SensorGeometry
from .formats import AugmentedRecord, parse_augmented_events, parse_ground_truth, read_json
from .synth import GroundTruthRecord
from .utils.logging import get_logger

logger = get_logger(__name__)

STATS_FILE = "stats.json"
TAU_TOLERANCE = 0.10


def file_summary(records: Sequence[AugmentedRecord]) -> Dict[str, int]:
    return {
        "events": len(records),
        "lifetimed": sum(1 for r in records if r.ok),
        "noise": sum(1 for r in records if not r.ok),
        "matched": sum(1 for r in records if r.matched),
    }


def _key(record: AugmentedRecord):
    e = record.event
    return (e.t, e.x, e.y, e.polarity.value)


def disparity_agreement(a: Sequence[AugmentedRecord], b: Sequence[AugmentedRecord]) -> Dict[str, float]:
    """Agreement on events matched in both files; symmetric in ``a`` and ``b``."""
    left = {_key(r): r.disparity for r in a if r.matched}
    right = {_key(r): r.disparity for r in b if r.matched}
    common = sorted(left.keys() & right.keys())
    if not common:
        return {"common_matched": 0, "exact": 0.0, "within_1px": 0.0}
    diffs = np.array([abs(left[k] - right[k]) for k in common])
    return {
        "common_matched": len(common),
        "exact": float(np.mean(diffs == 0)),
        "within_1px": float(np.mean(diffs <= 1)),
    }


def truth_summary(records: Sequence[AugmentedRecord], truth: Sequence[GroundTruthRecord]) -> Optional[Dict[str, float]]:
    """Lifetime and disparity error against a ground-truth sidecar aligned by index."""
    if len(records) != len(truth):
        logger.warning("Ground truth has %s records for %s events; skipping", len(truth), len(records))
        return None
    errors: List[float] = []
    relative: List[float] = []
    disparity_hits: List[bool] = []
    for record, expected in zip(records, truth):
        if expected.noise:
            continue
        if record.lifetime_us is not None and expected.tau_us:
            error = abs(record.lifetime_us - expected.tau_us)
            errors.append(error)
            relative.append(error / expected.tau_us)
        if record.matched and expected.disparity is not None:
            disparity_hits.append(record.disparity == expected.disparity)
    summary: Dict[str, float] = {
        "lifetimes_scored": len(errors),
        "median_abs_tau_error_us": float(np.median(errors)) if errors else 0.0,
        "tau_within_10pct": float(np.mean(np.array(relative) <= TAU_TOLERANCE)) if relative else 0.0,
        "disparities_scored": len(disparity_hits),
        "disparity_exact": float(np.mean(disparity_hits)) if disparity_hits else 0.0,
    }
    return summary


def _sibling_stats(path: Path) -> Optional[dict]:
    stats_path = path.parent / STATS_FILE
    return read_json(stats_path) if stats_path.exists() else None


def _ratio(numerator: Optional[float], denominator: Optional[float]) -> Optional[float]:
    if numerator is None or not denominator:
        return None
    return numerator / denominator


def compare_files(
    path_a: Union[str, Path],
    path_b: Union[str, Path],
    truth_path: Optional[Union[str, Path]] = None,
    geometry: Optional[SensorGeometry] = None,
) -> dict:
    """
    Build the comparison report of two augmented files of the same input stream.

    Plane-fit counts, lifetime time and wall time come from a ``stats.json`` next to each
    file when present; the ratios are ``a / b``.
    """
    path_a, path_b = Path(path_a), Path(path_b)
    records_a = parse_augmented_events(path_a, geometry)
    records_b = parse_augmented_events(path_b, geometry)

    report = {"a": {"path": str(path_a), **file_summary(records_a)},
              "b": {"path": str(path_b), **file_summary(records_b)}}
    stats = {"a": _sibling_stats(path_a), "b": _sibling_stats(path_b)}
    for name, item in stats.items():
        if item is not None:
            report[name]["plane_fits"] = item["plane_fits"]
            report[name]["lifetime_seconds"] = item["lifetime_seconds"]
            report[name]["wall_seconds"] = item["wall_seconds"]
    report["plane_fit_ratio"] = _ratio(report["a"].get("plane_fits"), report["b"].get("plane_fits"))
    report["lifetime_time_ratio"] = _ratio(report["a"].get("lifetime_seconds"), report["b"].get("lifetime_seconds"))
    report["wall_time_ratio"] = _ratio(report["a"].get("wall_seconds"), report["b"].get("wall_seconds"))
    report["disparity_agreement"] = disparity_agreement(records_a, records_b)

    if truth_path is not None:
        truth = parse_ground_truth(truth_path)
        report["ground_truth"] = {
            "path": str(truth_path),
            "a": truth_summary(records_a, truth),
            "b": truth_summary(records_b, truth),
        }
    return report
