"""Photogrammetric ranging, streetlight triangulation and FV positioning.

Triangulation convention: the camera's foot point projects onto the
streetlight line at a point ``c_eq`` meters *behind* the nearest usable
streetlight SL1, and ``c_eq + d`` behind the next one SL2, with ``h`` the
horizontal distance between the camera and that line. Hence::

    a1^2 = c_eq^2 + h^2,   a2^2 = (c_eq + d)^2 + h^2

The tracked state stores the host's offset *past* the anchor streetlight, the
last one passed: ``c = d - c_eq`` with ``anchor = id(SL1) - 1``, wrapping to
``c = 0, anchor = id(SL1)`` when the host is abeam of SL1. Forward motion
then increases ``c`` until it wraps past ``d`` and the anchor advances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .camera import CameraIntrinsics, PixelFootprint, SubPixelFootprintError
from .link import BeaconId


class GeometryError(ValueError):
    """Measurements are inconsistent with the triangulation geometry."""


class InsufficientBeaconsError(ValueError):
    """Fewer than two consecutive decoded streetlights."""


class OcclusionError(ValueError):
    """Only one taillight of a vehicle's pair is visible."""


@dataclass(frozen=True)
class RangeMeasurement:
    beacon: BeaconId
    direct_distance: float  # m
    pixel_count: float
    bearing: float  # rad, positive right of the center plane
    timestamp: float = 0.0
    horizontal_displacement: float = 0.0  # px

    def __post_init__(self):
        if self.direct_distance <= 0:
            raise ValueError("direct_distance must be positive")
        if self.pixel_count < 1:
            raise SubPixelFootprintError("pixel_count must be >= 1")


@dataclass(frozen=True)
class HvPositionState:
    h: float
    c: float
    anchor_sl: int
    spacing: float  # d of the anchor pair
    speed_estimate: float = 0.0
    last_bearings: tuple = (0.0, 0.0)
    timestamp: float = 0.0
    side: int = 1  # +1 when the streetlight line is to the right of the host
    curved: bool = False

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if not 0 <= self.c < self.spacing:
            raise ValueError(f"c={self.c} outside [0, {self.spacing})")

    @property
    def chain_position(self) -> float:
        """Distance along the streetlight line from the foot of SL id 0."""
        return self.anchor_sl * self.spacing + self.c

    @property
    def virtual_xy(self) -> tuple:
        """Host in the anchor frame: x along the road, y positive left."""
        return self.c, self.side * self.h


@dataclass(frozen=True)
class FvPositionEstimate:
    fv_id: int
    range: float
    bearing: float
    horizontal_displacement: float
    world_estimate: Optional[tuple]  # (x, y) in the anchor frame, None if unanchored
    relative_speed: float
    collision_flag: bool
    timestamp: float = 0.0

    @property
    def unanchored(self) -> bool:
        return self.world_estimate is None


def distance_from_pixels(area: float, pixel_count: float, intr: CameraIntrinsics) -> float:
    """Direct distance to a panel of ``area`` m^2 covering ``pixel_count`` pixels."""
    if area <= 0:
        raise ValueError("area must be positive")
    if pixel_count < 1:
        raise SubPixelFootprintError(f"pixel_count {pixel_count} below one pixel")
    return intr.focal_length / intr.pixel_pitch * math.sqrt(area / pixel_count)


def horizontal_standoff(D: float, height_diff: float) -> float:
    height_diff = abs(height_diff)
    if D <= height_diff:
        raise GeometryError(f"direct distance {D} not longer than height offset {height_diff}")
    return math.sqrt(D * D - height_diff * height_diff)


class Offset(NamedTuple):
    value: float
    valid: bool


def longitudinal_offset(a1: float, a2: float, d: float) -> Offset:
    """Offset of the camera foot point behind SL1; ``valid`` iff in ``[0, d)``."""
    if d <= 0:
        raise ValueError("spacing must be positive")
    c = ((a2 * a2 - a1 * a1) - d * d) / (2.0 * d)
    if abs(c) <= 1e-9 * d:  # round-off when the camera is abeam of SL1
        c = 0.0
    return Offset(c, bool(0.0 <= c < d))


def lateral_distance(a1: float, c: float) -> float:
    if a1 <= abs(c):
        raise GeometryError(f"standoff {a1} not longer than offset {c}")
    return math.sqrt(a1 * a1 - c * c)


def triangulate(a1: float, a2: float, d: float) -> tuple:
    """``(h, c_eq)`` from two horizontal standoffs; raises on invalid geometry."""
    off = longitudinal_offset(a1, a2, d)
    if not off.valid:
        raise GeometryError(f"offset {off.value:.3f} m outside [0, {d})")
    return lateral_distance(a1, off.value), off.value


def bearing_from_displacement(displacement, intr: CameraIntrinsics):
    """Horizontal angle of a footprint, positive right of the center plane."""
    theta = np.arctan(np.asarray(displacement, dtype=float) * intr.pixel_pitch
                      / intr.focal_length)
    return float(theta) if theta.ndim == 0 else theta


def predicted_bearings(h: float, c_eq: float, d: float) -> tuple:
    """Straight-road bearing magnitudes of SL1 and SL2."""
    return math.atan2(h, c_eq), math.atan2(h, c_eq + d)


def predicted_bearing_gap(theta1: float, a1: float, a2: float) -> float:
    """Straight-road ``|theta1| - |theta2|`` implied by ``theta1`` and the standoffs.

    With the camera heading parallel to the streetlight line both lamps share
    the lateral distance ``h = a1 sin|theta1| = a2 sin|theta2|``.
    """
    s = min(1.0, a1 * math.sin(abs(theta1)) / a2)
    return abs(theta1) - math.asin(s)


def curvature_check(theta1: float, theta2: float, predicted_delta: float,
                    tolerance: float = math.radians(2.0)) -> str:
    """``"curved"`` when the bearing gap departs from the straight-road value."""
    residual = abs(abs(theta1 - theta2) - abs(predicted_delta))
    return "curved" if residual > tolerance else "straight"


def streetlight_range(beacon: BeaconId, fp: PixelFootprint, area: float,
                      intr: CameraIntrinsics, timestamp: float = 0.0) -> RangeMeasurement:
    D = distance_from_pixels(area, fp.pixel_count, intr)
    return RangeMeasurement(beacon, D, fp.pixel_count,
                            bearing_from_displacement(fp.horizontal_displacement, intr),
                            timestamp, fp.horizontal_displacement)


def update_hv_position(prev: Optional[HvPositionState], ranges: Sequence[RangeMeasurement],
                       dt: float, camera_height: float,
                       curvature_tolerance: float = math.radians(2.0)) -> HvPositionState:
    """New host state from the two nearest decoded streetlights.

    ``ranges`` may hold any number of streetlight measurements; the two with
    the largest pixel counts are used and must carry consecutive ids. On a
    detected curve the previous state is returned with ``curved`` set.
    """
    sls = sorted((r for r in ranges if r.beacon.kind == "SL"),
                 key=lambda r: -r.pixel_count)
    if len(sls) < 2:
        raise InsufficientBeaconsError("need two decoded streetlights")
    m1, m2 = sorted(sls[:2], key=lambda r: r.beacon.id)
    if m2.beacon.id != m1.beacon.id + 1:
        raise InsufficientBeaconsError(
            f"streetlights {m1.beacon.id} and {m2.beacon.id} are not consecutive")
    d = m1.beacon.spacing
    dz = m1.beacon.lamp_height - camera_height
    a1 = horizontal_standoff(m1.direct_distance, dz)
    a2 = horizontal_standoff(m2.direct_distance, m2.beacon.lamp_height - camera_height)
    th1, th2 = m1.bearing, m2.bearing
    gap = predicted_bearing_gap(th1, a1, a2)
    if curvature_check(th1, th2, gap, curvature_tolerance) == "curved":
        if prev is None:
            raise GeometryError("curved road before any straight fix")
        return replace(prev, curved=True, last_bearings=(th1, th2))
    h, c_eq = triangulate(a1, a2, d)

    if c_eq == 0.0:
        anchor, c = m1.beacon.id, 0.0
    else:
        anchor, c = m1.beacon.id - 1, d - c_eq
    side = 1 if (th1 + th2) >= 0 else -1
    speed = 0.0
    if prev is not None:
        elapsed = m1.timestamp - prev.timestamp
        if elapsed <= 0:
            elapsed = dt
        if elapsed > 0:
            speed = ((anchor * d + c) - prev.chain_position) / elapsed
    return HvPositionState(h=h, c=c, anchor_sl=anchor, spacing=d, speed_estimate=speed,
                           last_bearings=(th1, th2), timestamp=m1.timestamp, side=side)


def vehicle_range(beacon: BeaconId, left: Optional[PixelFootprint],
                  right: Optional[PixelFootprint], intr: CameraIntrinsics,
                  timestamp: float = 0.0) -> RangeMeasurement:
    """Range and bearing of a vehicle from its two taillight footprints.

    The panel area comes from the decoded id. The range is the mean of the
    two per-light distances and the bearing is taken at the pair's midpoint.
    """
    if left is None or right is None:
        raise OcclusionError(f"FV {beacon.id}: only one taillight visible")
    area = beacon.panel_area
    D = 0.5 * (distance_from_pixels(area, left.pixel_count, intr)
               + distance_from_pixels(area, right.pixel_count, intr))
    disp = 0.5 * (left.horizontal_displacement + right.horizontal_displacement)
    return RangeMeasurement(beacon, D, min(left.pixel_count, right.pixel_count),
                            bearing_from_displacement(disp, intr), timestamp, disp)


def estimate_fv_position(hv: Optional[HvPositionState], fv_range: RangeMeasurement,
                         prev: Optional[FvPositionEstimate], dt: float,
                         threshold: float = 10.0) -> FvPositionEstimate:
    if fv_range.beacon.kind != "FV":
        raise ValueError("measurement is not from a vehicle")
    r, th = fv_range.direct_distance, fv_range.bearing
    world = None
    if hv is not None:
        x0, y0 = hv.virtual_xy
        world = (x0 + r * math.cos(th), y0 - r * math.sin(th))
    rel = (r - prev.range) / dt if prev is not None and dt > 0 else 0.0
    return FvPositionEstimate(fv_id=fv_range.beacon.id, range=r, bearing=th,
                              horizontal_displacement=fv_range.horizontal_displacement,
                              world_estimate=world, relative_speed=rel,
                              collision_flag=r < threshold, timestamp=fv_range.timestamp)


@dataclass(frozen=True)
class Roi:
    beacon: BeaconId
    footprints: tuple  # one per streetlight, (left, right) per vehicle


def select_roi(detections: Sequence[tuple]) -> list:
    """Group ``(decoded_id_or_None, footprint)`` pairs into regions of interest.

    Footprints without a decoded id are dropped. A vehicle's footprints are
    merged into one group ordered left to right; every streetlight gets its own.
    """
    groups: dict = {}
    out = []
    for bid, fp in detections:
        if bid is None:
            continue
        if bid.kind == "SL":
            out.append(Roi(bid, (fp,)))
        else:
            groups.setdefault(bid, []).append(fp)
    for bid, fps in groups.items():
        fps = sorted(fps, key=lambda f: f.centroid[0])
        out.append(Roi(bid, tuple(fps)))
    return out
