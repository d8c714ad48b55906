"""
Single-event lifetime estimation by local plane fitting on the SAE.

Window points are expressed in a local frame: x and y relative to the
current pixel, t in seconds relative to ``t_current - dt_max``. In that frame
the SAE tangent plane always has a positive time intercept, so the plane
form ``n . p = 1`` can represent it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .config import RansacParams
from .errors import DegeneratePlaneError, UndefinedVelocityError
from .events import Event, LifetimeSource, SurfaceOfActiveEvents, spatiotemporal_window
from .utils.logging import get_logger

logger = get_logger(__name__)

US_PER_SECOND = 1_000_000
N3_TOLERANCE = 1e-12
CONDITION_LIMIT = 1e12

RngLike = Union[None, int, np.random.Generator]


@dataclass(frozen=True)
class PlaneNormal:
    """Normal of the SAE tangent plane ``n1*x + n2*y + n3*t = 1`` (x, y pixels; t seconds)."""

    n1: float
    n2: float
    n3: float

    def __post_init__(self) -> None:
        if self.n1 == 0 and self.n2 == 0 and self.n3 == 0:
            raise ValueError("Plane normal must not be the zero vector")

    def as_array(self) -> np.ndarray:
        return np.array([self.n1, self.n2, self.n3], dtype=float)

    @property
    def norm(self) -> float:
        return math.sqrt(self.n1 * self.n1 + self.n2 * self.n2 + self.n3 * self.n3)

    def scaled(self, factor: float) -> "PlaneNormal":
        return PlaneNormal(self.n1 * factor, self.n2 * factor, self.n3 * factor)

    def unit(self) -> np.ndarray:
        return self.as_array() / self.norm


@dataclass(frozen=True)
class LocalFrame:
    """Origin of a plane-fitting window: pixel (x, y) and time offset in microseconds."""

    x: int
    y: int
    t_origin_us: int

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Convert absolute ``(x, y, t_us)`` rows to local ``(x, y, t_seconds)`` rows."""
        absolute = np.asarray(points, dtype=np.int64).reshape(-1, 3)
        local = np.empty(absolute.shape, dtype=float)
        local[:, 0] = absolute[:, 0] - self.x
        local[:, 1] = absolute[:, 1] - self.y
        local[:, 2] = (absolute[:, 2] - self.t_origin_us) / US_PER_SECOND
        return local


@dataclass(frozen=True)
class CachedPlane:
    """A fitted plane kept by the predictor together with its frame and fit time."""

    normal: PlaneNormal
    frame: LocalFrame
    fit_t_us: int

    def predict_us(self, x: int, y: int) -> float:
        """Predicted absolute timestamp (us) of the plane at pixel (x, y)."""
        local_t = predict_timestamp(self.normal, (self.frame.x, self.frame.y), (x, y))
        return self.frame.t_origin_us + local_t * US_PER_SECOND

    def shifted(self, dx: int) -> "CachedPlane":
        """The same plane moved by ``dx`` columns, fit time unchanged."""
        return CachedPlane(self.normal, replace(self.frame, x=self.frame.x + dx), self.fit_t_us)


@dataclass(frozen=True)
class LifetimeEstimate:
    """Outcome of a successful lifetime estimate."""

    lifetime_us: int
    normal: PlaneNormal
    source: LifetimeSource


class PlanePredictor:
    """
    Per-pixel cache of the last fitted plane.

    Entries expire ``dt_max_us`` after their fit. Lookups consult the incoming
    pixel and its 8-neighborhood. Also counts plane-fit invocations, skips and
    planes adopted from the other sensor.
    """

    def __init__(self, dt_max_us: int) -> None:
        self.dt_max_us = dt_max_us
        self._cache: Dict[Tuple[int, int], CachedPlane] = {}
        self.fit_invocations = 0
        self.skips = 0
        self.adopted = 0

    def __len__(self) -> int:
        return len(self._cache)

    def store(self, x: int, y: int, plane: CachedPlane) -> None:
        self._cache[(x, y)] = plane

    def adopt(self, x: int, y: int, plane: CachedPlane, dx: int) -> None:
        """Cache a plane fitted on the other sensor, moved onto pixel (x, y) of this one."""
        self._cache[(x, y)] = plane.shifted(dx)
        self.adopted += 1

    def get(self, x: int, y: int) -> Optional[CachedPlane]:
        return self._cache.get((x, y))

    def lookup(self, event: Event, threshold_us: float) -> Optional[CachedPlane]:
        """Return the fresh neighboring plane with the smallest prediction error within threshold."""
        best: Optional[CachedPlane] = None
        best_error = math.inf
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                plane = self._cache.get((event.x + dx, event.y + dy))
                if plane is None:
                    continue
                age = event.t - plane.fit_t_us
                if age < 0 or age > self.dt_max_us:
                    continue
                try:
                    error = prediction_error(event.t, plane.predict_us(event.x, event.y))
                except UndefinedVelocityError:
                    continue
                if error <= threshold_us and error < best_error:
                    best, best_error = plane, error
        return best


def fit_plane_least_squares(points: Union[np.ndarray, Sequence[Sequence[float]]]) -> PlaneNormal:
    """
    Solve ``argmin ||A n - 1||^2`` through the normal equations.

    Args:
        points: At least three ``(x, y, t)`` rows in local coordinates.

    Returns:
        PlaneNormal: The least-squares normal.

    Raises:
        DegeneratePlaneError: If the system is singular or n3 is ~0.
    """
    a = np.asarray(points, dtype=float).reshape(-1, 3)
    if a.shape[0] < 3:
        raise DegeneratePlaneError(f"Need at least 3 points, got {a.shape[0]}")
    ata = a.T @ a
    atb = a.sum(axis=0)
    if not np.all(np.isfinite(ata)) or np.linalg.cond(ata) > CONDITION_LIMIT:
        raise DegeneratePlaneError("Singular plane system (collinear points)")
    n = np.linalg.solve(ata, atb)
    if abs(n[2]) <= N3_TOLERANCE * np.linalg.norm(n):
        raise DegeneratePlaneError("Plane is parallel to the time axis")
    return PlaneNormal(float(n[0]), float(n[1]), float(n[2]))


def plane_distances(normal: PlaneNormal, points: np.ndarray) -> np.ndarray:
    """Vectorised point_plane_distance over ``(k, 3)`` rows."""
    n = normal.as_array()
    return np.abs(np.asarray(points, dtype=float).reshape(-1, 3) @ n - 1.0) / normal.norm


def point_plane_distance(normal: PlaneNormal, point: Sequence[float]) -> float:
    """Euclidean distance from ``point`` to the plane ``n . p = 1``."""
    n = normal.as_array()
    return float(abs(float(np.dot(n, np.asarray(point, dtype=float))) - 1.0) / normal.norm)


def ransac_search(
    points: Union[np.ndarray, Sequence[Sequence[float]]],
    current: Sequence[float],
    params: RansacParams,
    rng: RngLike = None,
) -> Optional[Tuple[PlaneNormal, np.ndarray]]:
    """
    RANSAC over ``points`` with hypotheses made of ``current`` plus two random points.

    The first iteration reaching the required inlier count wins; its inliers are
    refitted by least squares. Returns the normal and the inlier mask over the
    candidate rows (``current`` is appended when it is not among ``points``), or
    None when no iteration qualifies.
    """
    candidates = np.asarray(points, dtype=float).reshape(-1, 3)
    current_row = np.asarray(current, dtype=float).reshape(3)
    found = np.flatnonzero(np.all(candidates == current_row, axis=1))
    if found.size:
        current_index = int(found[0])
    else:
        candidates = np.vstack([candidates, current_row])
        current_index = candidates.shape[0] - 1

    total = candidates.shape[0]
    required = params.required_inliers(total)
    if total < 3 or total < required:
        return None

    others = np.delete(np.arange(total), current_index)
    generator = np.random.default_rng(rng)
    for _ in range(params.max_iterations):
        pair = generator.choice(others, size=2, replace=False)
        try:
            hypothesis = fit_plane_least_squares(candidates[[current_index, pair[0], pair[1]]])
        except DegeneratePlaneError:
            continue
        inliers = plane_distances(hypothesis, candidates) < params.mu
        if int(inliers.sum()) < required:
            continue
        try:
            return fit_plane_least_squares(candidates[inliers]), inliers
        except DegeneratePlaneError:
            continue
    return None


def fit_plane_ransac(
    points: Union[np.ndarray, Sequence[Sequence[float]]],
    current: Sequence[float],
    params: RansacParams,
    rng: RngLike = None,
) -> Optional[PlaneNormal]:
    """Robust plane fit; None means the event is noise."""
    result = ransac_search(points, current, params, rng)
    return None if result is None else result[0]


def lifetime_from_normal(normal: PlaneNormal) -> float:
    """
    Lifetime in seconds: ``|sqrt(n1^2 + n2^2) / n3|``.

    Raises:
        UndefinedVelocityError: If the plane is parallel to the time axis.
    """
    if abs(normal.n3) <= N3_TOLERANCE * normal.norm:
        raise UndefinedVelocityError("n3 is ~0; lifetime undefined")
    return abs(math.hypot(normal.n1, normal.n2) / normal.n3)


def lifetime_from_velocity(vx: float, vy: float) -> float:
    """
    Lifetime in seconds from per-axis velocities (pixels/second, ``math.inf`` allowed).

    Raises:
        UndefinedVelocityError: If either velocity is exactly zero.
    """
    if vx == 0 or vy == 0:
        raise UndefinedVelocityError("Zero velocity gives an infinite lifetime")
    inv_x = 0.0 if math.isinf(vx) else 1.0 / vx
    inv_y = 0.0 if math.isinf(vy) else 1.0 / vy
    return math.hypot(inv_x, inv_y)


def velocity_from_normal(normal: PlaneNormal) -> Tuple[float, float]:
    """Per-axis velocities ``(-n3/n1, -n3/n2)``; a zero component maps to ``math.inf``."""
    vx = math.inf if normal.n1 == 0 else -normal.n3 / normal.n1
    vy = math.inf if normal.n2 == 0 else -normal.n3 / normal.n2
    return vx, vy


def predict_timestamp(
    normal: PlaneNormal,
    window_origin: Tuple[float, float],
    pixel: Tuple[float, float],
) -> float:
    """Local time (seconds) at which the plane passes through ``pixel``."""
    if abs(normal.n3) <= N3_TOLERANCE * normal.norm:
        raise UndefinedVelocityError("n3 is ~0; timestamp prediction undefined")
    lx = pixel[0] - window_origin[0]
    ly = pixel[1] - window_origin[1]
    return (1.0 - normal.n1 * lx - normal.n2 * ly) / normal.n3


def prediction_error(t_actual: float, t_predicted: float) -> float:
    return abs(t_actual - t_predicted)


def seconds_to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_SECOND))


def estimate_lifetime(
    sae: SurfaceOfActiveEvents,
    predictor: PlanePredictor,
    event: Event,
    params: RansacParams,
    rng: RngLike = None,
) -> Optional[LifetimeEstimate]:
    """
    Lifetime of ``event`` (already applied to ``sae``), or None for noise.

    A fresh neighboring plane whose prediction error is within
    ``reliability_threshold_us`` is reused without any fitting. Otherwise RANSAC
    runs on the spatiotemporal window and a successful fit is cached.
    """
    cached = predictor.lookup(event, params.reliability_threshold_us)
    if cached is not None:
        try:
            lifetime = lifetime_from_normal(cached.normal)
        except UndefinedVelocityError:
            lifetime = None
        if lifetime is not None:
            predictor.skips += 1
            return LifetimeEstimate(seconds_to_us(lifetime), cached.normal, LifetimeSource.PREDICTED)

    frame = LocalFrame(event.x, event.y, event.t - params.dt_max_us)
    window = spatiotemporal_window(sae, (event.x, event.y), params.window_n, params.dt_max_us, event.t)
    current = frame.to_local(np.array([[event.x, event.y, event.t]]))[0]
    predictor.fit_invocations += 1
    normal = fit_plane_ransac(frame.to_local(window), current, params, rng)
    if normal is None:
        logger.debug("Event (%s, %s, %s) declared noise: no plane support", event.x, event.y, event.t)
        return None
    try:
        lifetime = lifetime_from_normal(normal)
    except UndefinedVelocityError:
        return None
    predictor.store(event.x, event.y, CachedPlane(normal, frame, event.t))
    return LifetimeEstimate(seconds_to_us(lifetime), normal, LifetimeSource.PLANE_FIT)
