"""Stereo matching: descriptor cost, cost aggregation, winner-takes-all and lifetime transfer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import StereoParams
from .descriptor import ActiveMask, DescriptorField, descriptor_field
from .errors import EmptyWindowError
from .events import SensorGeometry, Side


@dataclass(frozen=True, eq=False)
class CostVolume:
    """Costs per pixel of a region (rows, columns) and per disparity 0..max_disparity."""

    origin_x: int
    origin_y: int
    cost: np.ndarray

    @property
    def disparities(self) -> int:
        return self.cost.shape[2]

    def at(self, x: int, y: int) -> np.ndarray:
        return self.cost[y - self.origin_y, x - self.origin_x]


def shift_direction(reference: Side) -> int:
    """Column step from a reference pixel to its counterpart: x_L - x_R = d."""
    return -1 if reference is Side.LEFT else 1


def box_sum(values: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1) x (2r+1) neighborhood of every entry, clipped at the borders."""
    if radius == 0:
        return values.copy()
    pad = ((radius + 1, radius), (radius + 1, radius)) + ((0, 0),) * (values.ndim - 2)
    integral = np.pad(values, pad).cumsum(axis=0).cumsum(axis=1)
    k = 2 * radius + 1
    return integral[k:, k:] - integral[:-k, k:] - integral[k:, :-k] + integral[:-k, :-k]


def matching_cost(
    desc_left: DescriptorField,
    desc_right: DescriptorField,
    p: Tuple[int, int],
    d: int,
    window: int,
    geometry: SensorGeometry,
    reference: Side = Side.LEFT,
) -> int:
    """
    Sum of L1 descriptor differences over the window around ``p`` at disparity ``d``.

    With the left sensor as reference the counterpart of (x, y) is (x - d, y).
    Window pixels whose counterpart falls outside the sensor cost the L1 norm of
    their own descriptor; window pixels outside the sensor are skipped.
    """
    ref, other = (desc_left, desc_right) if reference is Side.LEFT else (desc_right, desc_left)
    step = shift_direction(reference)
    half = window // 2
    px, py = p
    total = 0
    for y in range(py - half, py + half + 1):
        for x in range(px - half, px + half + 1):
            if not geometry.contains(x, y):
                continue
            own = ref.at(x, y).astype(np.int64)
            xo = x + step * d
            if 0 <= xo < geometry.width:
                total += int(np.abs(own - other.at(xo, y)).sum())
            else:
                total += int(own.sum())
    return total


def cost_volume(
    ref_field: DescriptorField,
    other_field: DescriptorField,
    center: Tuple[int, int],
    window: int,
    max_disparity: int,
    block_radius: int,
    geometry: SensorGeometry,
    reference: Side = Side.LEFT,
) -> CostVolume:
    """
    matching_cost for every pixel within ``block_radius`` of ``center`` and every disparity.

    ``ref_field`` must cover the block grown by ``window // 2`` (clipped to the
    sensor); ``other_field`` the same rows and the columns reached by the sweep.
    """
    step = shift_direction(reference)
    half = window // 2
    cx, cy = center
    bx0, bx1 = max(cx - block_radius, 0), min(cx + block_radius, geometry.width - 1)
    by0, by1 = max(cy - block_radius, 0), min(cy + block_radius, geometry.height - 1)
    rx0, rx1 = max(bx0 - half, 0), min(bx1 + half, geometry.width - 1)
    ry0, ry1 = max(by0 - half, 0), min(by1 + half, geometry.height - 1)

    ref = ref_field.values[
        ry0 - ref_field.origin_y : ry1 - ref_field.origin_y + 1,
        rx0 - ref_field.origin_x : rx1 - ref_field.origin_x + 1,
    ].astype(np.int64)
    other_rows = other_field.values[ry0 - other_field.origin_y : ry1 - other_field.origin_y + 1].astype(np.int64)
    ref_l1 = ref.sum(axis=-1)
    columns = np.arange(rx0, rx1 + 1)

    pixel_cost = np.empty(ref.shape[:2] + (max_disparity + 1,), dtype=np.int64)
    for d in range(max_disparity + 1):
        counterpart = columns + step * d
        valid = (counterpart >= 0) & (counterpart < geometry.width)
        index = np.clip(counterpart - other_field.origin_x, 0, other_field.width - 1)
        diff = np.abs(ref - other_rows[:, index, :]).sum(axis=-1)
        pixel_cost[:, :, d] = np.where(valid[None, :], diff, ref_l1)

    windowed = box_sum(pixel_cost, half)
    block = windowed[by0 - ry0 : by1 - ry0 + 1, bx0 - rx0 : bx1 - rx0 + 1]
    return CostVolume(bx0, by0, block)


def aggregate_cost(volume: CostVolume, region: int, iterations: int) -> CostVolume:
    """Iterated sums over the region A around each pixel, per disparity; 0 iterations is identity."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0:
        return volume
    cost = volume.cost
    for _ in range(iterations):
        cost = box_sum(cost, region // 2)
    return CostVolume(volume.origin_x, volume.origin_y, cost)


def winner_takes_all(costs: Sequence[float]) -> int:
    """Index of the minimal cost; ties go to the smaller disparity."""
    return int(np.argmin(np.asarray(costs)))


def estimate_disparity(aggregated: CostVolume, p: Tuple[int, int], params: StereoParams) -> Optional[int]:
    """
    Winner-takes-all disparity at ``p`` or None (NO_MATCH).

    The match is rejected when the second best cost is below
    ``confidence_ratio * best`` or when two disparities both cost nothing.
    """
    costs = np.asarray(aggregated.at(*p), dtype=float)
    best = winner_takes_all(costs)
    second = float(np.delete(costs, best).min())
    if second <= 0.0 or second < params.confidence_ratio * float(costs[best]):
        return None
    return best


def match_event(
    ref_mask: ActiveMask,
    other_mask: ActiveMask,
    pixel: Tuple[int, int],
    reference: Side,
    params: StereoParams,
    geometry: SensorGeometry,
) -> Optional[int]:
    """
    Disparity of the event at ``pixel`` seen by ``reference``, or None.

    Descriptor fields are computed only over the pixels touched by the cost
    window, the aggregation region and the disparity sweep.
    """
    block_radius = (params.aggregation_region // 2) * params.aggregation_iterations
    reach = block_radius + params.cost_window // 2
    x, y = pixel
    rx0, rx1 = max(x - reach, 0), min(x + reach, geometry.width - 1)
    ry0, ry1 = max(y - reach, 0), min(y + reach, geometry.height - 1)
    if reference is Side.LEFT:
        ox0, ox1 = max(rx0 - params.max_disparity, 0), rx1
    else:
        ox0, ox1 = rx0, min(rx1 + params.max_disparity, geometry.width - 1)

    n = params.descriptor_window
    ref_field = descriptor_field(ref_mask, rx0, ry0, rx1, ry1, n)
    other_field = descriptor_field(other_mask, ox0, ry0, ox1, ry1, n)
    volume = cost_volume(
        ref_field,
        other_field,
        pixel,
        params.cost_window,
        params.max_disparity,
        block_radius,
        geometry,
        reference,
    )
    aggregated = aggregate_cost(volume, params.aggregation_region, params.aggregation_iterations)
    return estimate_disparity(aggregated, pixel, params)


def median_lifetime(lifetimes: Sequence[int]) -> int:
    """
    Median lifetime; the lower-middle element for even counts.

    Raises:
        EmptyWindowError: If ``lifetimes`` is empty.
    """
    values = sorted(int(v) for v in lifetimes)
    if not values:
        raise EmptyWindowError("No lifetimed events in the matched window")
    return values[(len(values) - 1) // 2]


def reduce_lifetimes(lifetimes: Sequence[int], reducer: str = "median") -> int:
    """Collapse matched-window lifetimes with the configured reducer."""
    values = [int(v) for v in lifetimes]
    if not values:
        raise EmptyWindowError("No lifetimed events in the matched window")
    if reducer == "median":
        return median_lifetime(values)
    if reducer == "mean":
        return int(round(sum(values) / len(values)))
    if reducer == "min":
        return min(values)
    if reducer == "max":
        return max(values)
    raise ValueError(f"Unknown reducer '{reducer}'")
