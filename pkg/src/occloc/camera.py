"""Pinhole camera with a discrete image sensor.

Camera frame convention: X to the right of the optical axis, Y down, Z along
the optical axis. Pixel ``(i, j)`` covers ``[i, i+1) x [j, j+1)`` so its
center sits at ``(i + 0.5, j + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


class BehindCameraError(ValueError):
    """Point lies at or behind the camera aperture (non-positive depth)."""


class SubPixelFootprintError(ValueError):
    """Projected emitter area is smaller than one pixel."""


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length: float  # m
    pixel_pitch: float  # m, square pixels
    width_px: int
    height_px: int
    principal_point: Optional[tuple[float, float]] = None  # px, defaults to sensor center
    skew: float = 0.0
    f_number: float = 4.0

    def __post_init__(self):
        if self.focal_length <= 0:
            raise ValueError("focal_length must be positive")
        if self.pixel_pitch <= 0:
            raise ValueError("pixel_pitch must be positive")
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("resolution must be at least 1x1")
        if self.principal_point is None:
            object.__setattr__(self, "principal_point",
                               (self.width_px / 2.0, self.height_px / 2.0))
        px, py = self.principal_point
        if not (0 <= px <= self.width_px and 0 <= py <= self.height_px):
            raise ValueError("principal point must lie on the sensor")

    @classmethod
    def from_sensor(cls, focal_length, sensor_width, sensor_height, megapixels, **kw):
        """Camera whose square pixels tile a sensor of fixed physical size."""
        pitch = math.sqrt(sensor_width * sensor_height / (megapixels * 1e6))
        return cls(focal_length=focal_length, pixel_pitch=pitch,
                   width_px=int(round(sensor_width / pitch)),
                   height_px=int(round(sensor_height / pitch)), **kw)

    @property
    def pixels_per_meter_x(self) -> float:
        return 1.0 / self.pixel_pitch

    @property
    def pixels_per_meter_y(self) -> float:
        return 1.0 / self.pixel_pitch

    @property
    def fx(self) -> float:
        return self.focal_length * self.pixels_per_meter_x

    @property
    def fy(self) -> float:
        return self.focal_length * self.pixels_per_meter_y

    @property
    def K(self) -> np.ndarray:
        px, py = self.principal_point
        return np.array([[self.fx, self.skew, px],
                         [0.0, self.fy, py],
                         [0.0, 0.0, 1.0]])

    @property
    def sensor_size(self) -> tuple[float, float]:
        return self.width_px * self.pixel_pitch, self.height_px * self.pixel_pitch

    @property
    def sensor_area(self) -> float:
        w, h = self.sensor_size
        return w * h

    @property
    def megapixels(self) -> float:
        return self.width_px * self.height_px / 1e6

    @property
    def horizontal_fov(self) -> float:
        return 2.0 * math.atan(self.sensor_size[0] / (2.0 * self.focal_length))

    @property
    def vertical_fov(self) -> float:
        return 2.0 * math.atan(self.sensor_size[1] / (2.0 * self.focal_length))


@dataclass(frozen=True)
class CameraExtrinsics:
    """Rigid pose: ``orientation`` rotates world vectors into the camera frame."""

    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.orientation, dtype=float)
        C = np.asarray(self.center, dtype=float).reshape(3)
        if R.shape != (3, 3):
            raise ValueError("orientation must be 3x3")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9 or np.linalg.det(R) < 0:
            raise ValueError("orientation must be a proper rotation")
        object.__setattr__(self, "orientation", R)
        object.__setattr__(self, "center", C)

    def to_camera(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p - self.center) @ self.orientation.T


@dataclass(frozen=True)
class ExposureSettings:
    exposure_time: float  # s
    frame_rate: float = 30.0  # frames/s

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if not 0 < self.exposure_time <= 1.0 / self.frame_rate + 1e-15:
            raise ValueError("exposure_time must lie in (0, 1/frame_rate]")


@dataclass(frozen=True)
class PixelFootprint:
    pixel_count: int
    centroid: tuple[float, float]  # px
    horizontal_displacement: float  # px, signed from the vertical center plane
    source_beacon: Optional[str] = None
    outline: Optional[np.ndarray] = None  # convex polygon, px
    continuous_area: float = float("nan")  # px^2 before rasterization
    clipped: bool = False  # outline extends past the sensor edge


def project_point(p, intr: CameraIntrinsics) -> np.ndarray:
    """Ideal perspective projection of camera-frame point(s) to pixels.

    Accepts a single ``(X, Y, Z)`` or an ``(N, 3)`` array.
    """
    p = np.asarray(p, dtype=float)
    X, Y, Z = p[..., 0], p[..., 1], p[..., 2]
    if np.any(Z <= 0):
        raise BehindCameraError("point at or behind the aperture (Z <= 0)")
    px, py = intr.principal_point
    # metric image-plane coordinates, then pixels; skew is in pixel units as in K
    xm = intr.focal_length * X / Z
    ym = intr.focal_length * Y / Z
    u = xm * intr.pixels_per_meter_x + intr.skew * Y / Z + px
    v = ym * intr.pixels_per_meter_y + py
    return np.stack([u, v], axis=-1)


def projection_matrix(intr: CameraIntrinsics, extr: CameraExtrinsics) -> np.ndarray:
    """3x4 camera matrix ``K [R | -R C]``."""
    R = extr.orientation
    return intr.K @ np.hstack([R, (-R @ extr.center)[:, None]])


def full_projection(p, intr: CameraIntrinsics, extr: CameraExtrinsics) -> np.ndarray:
    """Project world point(s) to pixels: rigid transform, then :func:`project_point`.

    Equivalent to applying :func:`projection_matrix` in homogeneous coordinates.
    """
    return project_point(extr.to_camera(p), intr)


def rasterize_convex(vertices, width: int, height: int):
    """Count pixel centers inside a convex polygon, clipped to the sensor.

    Scanline evaluation: each row contributes the pixel centers lying in the
    polygon's half-open x-interval at the row's center height.
    Returns ``(count, cx, cy)``; the centroid is NaN when nothing is covered.
    """
    v = np.asarray(vertices, dtype=float)
    ys = v[:, 1]
    j0 = max(math.ceil(ys.min() - 0.5), 0)
    j1 = min(math.ceil(ys.max() - 0.5), height)
    if j1 <= j0:
        return 0, math.nan, math.nan
    yc = np.arange(j0, j1) + 0.5
    q = np.concatenate([v[1:], v[:1]])
    dy = q[:, 1] - ys
    nz = dy != 0
    p, q, dy = v[nz], q[nz], dy[nz]
    t = (yc[:, None] - p[:, 1]) / dy
    ok = (t >= 0.0) & (t <= 1.0)
    x = p[:, 0] + t * (q[:, 0] - p[:, 0])
    xl = np.where(ok, x, np.inf).min(axis=1)
    xr = np.where(ok, x, -np.inf).max(axis=1)
    good = np.isfinite(xl) & np.isfinite(xr)
    i0 = np.clip(np.ceil(xl[good] - 0.5), 0, width)
    i1 = np.clip(np.ceil(xr[good] - 0.5), 0, width)
    n = np.maximum(i1 - i0, 0.0)
    count = int(n.sum())
    if count == 0:
        return 0, math.nan, math.nan
    cx = float((n * (i0 + i1)).sum() * 0.5 / count)
    cy = float((n * yc[good]).sum() / count)
    return count, cx, cy


def rasterize_rect(x0: float, y0: float, x1: float, y1: float, width: int, height: int):
    """Closed-form :func:`rasterize_convex` for an axis-aligned rectangle."""
    i0 = min(max(math.ceil(x0 - 0.5), 0), width)
    i1 = min(max(math.ceil(x1 - 0.5), 0), width)
    j0 = min(max(math.ceil(y0 - 0.5), 0), height)
    j1 = min(max(math.ceil(y1 - 0.5), 0), height)
    nx, ny = max(i1 - i0, 0), max(j1 - j0, 0)
    if nx == 0 or ny == 0:
        return 0, math.nan, math.nan
    return nx * ny, 0.5 * (i0 + i1), 0.5 * (j0 + j1)


def rasterize_swept_rect(x0: float, y0: float, x1: float, y1: float, dx: float, dy: float,
                         width: int, height: int):
    """:func:`rasterize_convex` of a rectangle swept along ``(dx, dy)``.

    Each row's covered x-interval is the union of the translated copies that
    reach that row, which is the same region as the convex hull of the start
    and end rectangles.
    """
    j0 = max(math.ceil(min(y0, y0 + dy) - 0.5), 0)
    j1 = min(math.ceil(max(y1, y1 + dy) - 0.5), height)
    if j1 <= j0:
        return 0, math.nan, math.nan
    yc = np.arange(j0, j1) + 0.5
    if abs(dy) < 1e-12:
        s_lo = np.zeros_like(yc)
        s_hi = np.ones_like(yc)
    else:
        a, b = (yc - y1) / dy, (yc - y0) / dy
        s_lo = np.minimum(np.maximum(np.minimum(a, b), 0.0), 1.0)
        s_hi = np.minimum(np.maximum(np.maximum(a, b), 0.0), 1.0)
    if dx >= 0:
        xl, xr = x0 + s_lo * dx, x1 + s_hi * dx
    else:
        xl, xr = x0 + s_hi * dx, x1 + s_lo * dx
    i0 = np.minimum(np.maximum(np.ceil(xl - 0.5), 0), width)
    i1 = np.minimum(np.maximum(np.ceil(xr - 0.5), 0), width)
    n = np.maximum(i1 - i0, 0.0)
    count = int(n.sum())
    if count == 0:
        return 0, math.nan, math.nan
    return count, float((n * (i0 + i1)).sum() * 0.5 / count), float((n * yc).sum() / count)


def _axis_rect(outline):
    """``(x0, y0, x1, y1)`` if ``outline`` is the axis-aligned rectangle
    ``panel_footprint`` builds (corners counter-clockwise from top-left), else None."""
    if outline is None or len(outline) != 4:
        return None
    (a, b), (c, d), (e, f), (g, h) = outline.tolist()
    if b == d and c == e and f == h and g == a:
        return a, b, e, f
    return None


def _swept_rect_outline(x0, y0, x1, y1, dx, dy) -> np.ndarray:
    """Convex hull of a rectangle and its copy shifted by ``(dx, dy)``."""
    # corners in order, each followed by the shifted copy when it is on the leading side
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    normals = [(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]  # edge i: corner i -> i+1
    out = []
    for i, (cx, cy) in enumerate(corners):
        n_in = normals[i - 1]
        n_out = normals[i]
        lead_in = n_in[0] * dx + n_in[1] * dy > 0
        lead_out = n_out[0] * dx + n_out[1] * dy > 0
        if lead_in and lead_out:
            out.append((cx + dx, cy + dy))
        elif lead_in:
            out += [(cx + dx, cy + dy), (cx, cy)]
        elif lead_out:
            out += [(cx, cy), (cx + dx, cy + dy)]
        else:
            out.append((cx, cy))
    return np.array(out)


def _is_clipped(outline, intr: CameraIntrinsics) -> bool:
    xs = outline[:, 0].tolist()
    ys = outline[:, 1].tolist()
    return min(xs) < 0 or min(ys) < 0 or max(xs) > intr.width_px or max(ys) > intr.height_px


def _polygon_area(v) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def direction_to_pixel(bearing: float, elevation: float, intr: CameraIntrinsics):
    """Pixel position of a ray given its horizontal bearing and elevation.

    Bearing is positive to the right of the optical axis, elevation positive up.
    """
    px, py = intr.principal_point
    u = px + intr.fx * math.tan(bearing)
    v = py - intr.fy * math.tan(elevation) / math.cos(bearing)
    return u, v


def panel_footprint(panel, distance: float, intr: CameraIntrinsics, bearing: float = 0.0,
                    elevation: float = 0.0, source: Optional[str] = None) -> PixelFootprint:
    """Rasterized image of an LED panel seen at ``distance`` along a ray.

    The image is the panel magnified by ``F / D`` in both directions and
    centered where the ray to the panel center meets the sensor.
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    w = intr.focal_length * panel.width / (distance * intr.pixel_pitch)
    h = intr.focal_length * panel.height / (distance * intr.pixel_pitch)
    area = w * h
    if area < 1.0:
        raise SubPixelFootprintError(
            f"continuous footprint {area:.3g} px is below one pixel at D={distance:.3g} m")
    u, v = direction_to_pixel(bearing, elevation, intr)
    outline = np.array([[u - w / 2, v - h / 2], [u + w / 2, v - h / 2],
                        [u + w / 2, v + h / 2], [u - w / 2, v + h / 2]])
    count, cx, cy = rasterize_rect(u - w / 2, v - h / 2, u + w / 2, v + h / 2,
                                   intr.width_px, intr.height_px)
    if count == 0:
        cx, cy = u, v
    return PixelFootprint(pixel_count=count, centroid=(cx, cy),
                          horizontal_displacement=cx - intr.principal_point[0],
                          source_beacon=source, outline=outline,
                          continuous_area=area, clipped=_is_clipped(outline, intr))


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise, no repeated end point."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def smear_footprint(fp: PixelFootprint, image_velocity: Sequence[float],
                    exposure: ExposureSettings, intr: CameraIntrinsics) -> PixelFootprint:
    """Footprint swept along ``image_velocity`` (px/s) during the exposure."""
    vx, vy = (float(c) for c in image_velocity)
    shift = np.array([vx, vy]) * exposure.exposure_time
    if fp.outline is None or not np.any(shift):
        return fp
    rect = _axis_rect(fp.outline)
    if rect is not None:
        outline = _swept_rect_outline(*rect, vx * exposure.exposure_time,
                                      vy * exposure.exposure_time)
        count, cx, cy = rasterize_swept_rect(*rect, shift[0], shift[1],
                                             intr.width_px, intr.height_px)
        w, h = rect[2] - rect[0], rect[3] - rect[1]
        area = w * h + abs(shift[0]) * h + abs(shift[1]) * w
    else:
        outline = convex_hull(np.vstack([fp.outline, fp.outline + shift]))
        count, cx, cy = rasterize_convex(outline, intr.width_px, intr.height_px)
        area = _polygon_area(outline)
    if count == 0:
        cx, cy = fp.centroid[0] + shift[0] / 2, fp.centroid[1] + shift[1] / 2
    return replace(fp, pixel_count=count, centroid=(cx, cy),
                   horizontal_displacement=cx - intr.principal_point[0],
                   outline=outline, continuous_area=float(area),
                   clipped=_is_clipped(outline, intr))
