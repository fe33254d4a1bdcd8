"""Road world: host and forwarding vehicles, streetlights, uniform motion.

Scene objects are placed in *road coordinates*: ``s`` is the arc length along
the road centerline and ``lateral`` the signed offset from it (left positive).
On a straight road these coincide with world ``x`` and ``y``; with nonzero
curvature the centerline is a constant-radius arc starting at the origin with
heading +x. World ``z`` is up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .camera import CameraExtrinsics


@dataclass(frozen=True)
class WorldPoint:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if self.z < 0:
            raise ValueError("scene objects cannot sit below the road (z < 0)")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class LedPanelSpec:
    width: float  # m
    height: float  # m
    emitted_optical_power: float = 1.0  # W
    lambertian_order: float = 1.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("panel dimensions must be positive")
        if self.emitted_optical_power <= 0:
            raise ValueError("emitted_optical_power must be positive")

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class StreetlightSpec:
    id: int
    base: WorldPoint  # road coordinates (s, lateral, 0)
    lamp_height: float
    spacing_to_next: float
    panel: LedPanelSpec

    def __post_init__(self):
        if self.lamp_height <= 0:
            raise ValueError("lamp_height must be positive")
        if self.spacing_to_next <= 0:
            raise ValueError("spacing_to_next must be positive")


@dataclass(frozen=True)
class VehicleSpec:
    id: int
    s: float  # road coordinate of the vehicle reference point (camera / rear face)
    lateral: float = 0.0
    speed: float = 0.0  # m/s
    is_host: bool = False
    taillight: LedPanelSpec = LedPanelSpec(0.1, 0.1)
    taillight_separation: float = 1.5  # m, center to center
    taillight_height: float = 0.8  # m
    body_width: float = 1.8
    body_height: float = 1.5
    heading: float = 0.0  # rad, filled from the road tangent

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be non-negative")
        for name in ("s", "lateral", "speed", "taillight_height"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.taillight_separation <= 0:
            raise ValueError("taillight_separation must be positive")


@dataclass(frozen=True)
class Road:
    curvature: float = 0.0  # 1/m, positive bends left

    def heading(self, s):
        if isinstance(s, float):
            return self.curvature * s
        return self.curvature * np.asarray(s, dtype=float)

    def to_world(self, s, lateral, z=0.0) -> np.ndarray:
        if self.curvature == 0.0 and all(isinstance(c, float) for c in (s, lateral, z)):
            return np.array([s, lateral, z])
        s = np.asarray(s, dtype=float)
        lateral = np.asarray(lateral, dtype=float)
        k = self.curvature
        if k == 0.0:
            x, y = s, lateral
        else:
            psi = k * s
            x = np.sin(psi) / k - lateral * np.sin(psi)
            y = (1.0 - np.cos(psi)) / k + lateral * np.cos(psi)
        return np.stack(np.broadcast_arrays(x, y, np.asarray(z, dtype=float)), axis=-1)

    def tangent(self, s) -> np.ndarray:
        if isinstance(s, float):
            psi = self.curvature * s
            return np.array([math.cos(psi), math.sin(psi), 0.0])
        psi = self.heading(s)
        return np.stack([np.cos(psi), np.sin(psi), np.zeros_like(psi)], axis=-1)


@dataclass(frozen=True)
class ScenarioConfig:
    streetlights: tuple
    vehicles: tuple
    road_curvature: float = 0.0
    duration: float = 10.0
    time_step: float = 1.0 / 30.0
    rng_seed: int = 0
    camera_height: float = 1.5

    def __post_init__(self):
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")
        if self.duration < self.time_step:
            raise ValueError("duration must be at least one time step")
        hosts = [v for v in self.vehicles if v.is_host]
        if len(hosts) != 1:
            raise ValueError(f"exactly one host vehicle required, found {len(hosts)}")
        ids = [sl.id for sl in sorted(self.streetlights, key=lambda sl: sl.base.x)]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("streetlight ids must increase along the road")

    @property
    def road(self) -> Road:
        return Road(self.road_curvature)

    @property
    def host(self) -> VehicleSpec:
        return next(v for v in self.vehicles if v.is_host)


@dataclass(frozen=True)
class SceneState:
    time: float
    vehicles: tuple
    streetlights: tuple
    road: Road = Road()
    camera_height: float = 1.5

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "SceneState":
        road = cfg.road
        vehicles = tuple(replace(v, heading=float(road.heading(v.s))) for v in cfg.vehicles)
        return cls(time=0.0, vehicles=vehicles, streetlights=tuple(cfg.streetlights),
                   road=road, camera_height=cfg.camera_height)

    @property
    def host(self) -> VehicleSpec:
        return next(v for v in self.vehicles if v.is_host)

    @property
    def forwarding(self) -> list:
        return [v for v in self.vehicles if not v.is_host]

    def camera_extrinsics(self) -> CameraExtrinsics:
        """Forward-looking camera on the host, optical axis along the heading."""
        cached = self.__dict__.get("_extrinsics")
        if cached is None:
            cached = self._build_extrinsics()
            object.__setattr__(self, "_extrinsics", cached)  # states are immutable
        return cached

    def _build_extrinsics(self) -> CameraExtrinsics:
        host = self.host
        center = self.road.to_world(host.s, host.lateral, self.camera_height)
        fwd = self.road.tangent(host.s)
        left = np.array([-fwd[1], fwd[0], 0.0])
        up = np.array([0.0, 0.0, 1.0])
        R = np.vstack([-left, -up, fwd])  # camera X right, Y down, Z forward
        return CameraExtrinsics(orientation=R, center=center)


def step_scene(state: SceneState, dt: float) -> SceneState:
    """Advance every vehicle by ``speed * dt`` along its lane."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    vehicles = tuple(
        v if v.speed == 0 else replace(v, s=v.s + v.speed * dt,
                                       heading=state.road.curvature * (v.s + v.speed * dt))
        for v in state.vehicles)
    return replace(state, time=state.time + dt, vehicles=vehicles)


@dataclass(frozen=True)
class Beacon:
    kind: str  # "SL" or "FV"
    id: int
    position: np.ndarray  # world
    normal: np.ndarray  # unit emitting direction
    panel: LedPanelSpec
    side: int = 0  # taillights: -1 left, +1 right (as seen from behind)

    @property
    def key(self) -> str:
        if self.kind == "FV":
            return f"FV-{self.id}{'L' if self.side < 0 else 'R'}"
        return f"SL-{self.id}"


@dataclass(frozen=True)
class BeaconView:
    beacon: Beacon
    distance: float  # direct camera-to-panel distance
    incidence: float  # angle from the optical axis (theta)
    irradiance: float  # angle from the emitter normal (phi)
    bearing: float  # horizontal, positive right of the optical axis
    elevation: float  # positive up
    camera_point: np.ndarray


@lru_cache(maxsize=16)
def _streetlight_beacons(streetlights: tuple, road: Road) -> tuple:
    if not streetlights:
        return ()
    s = np.array([sl.base.x for sl in streetlights])
    pos = road.to_world(s, [sl.base.y for sl in streetlights],
                        [sl.lamp_height for sl in streetlights])
    normals = -road.tangent(s)
    return tuple(Beacon("SL", sl.id, p, n, sl.panel)
                 for sl, p, n in zip(streetlights, pos, normals))


def scene_beacons(state: SceneState) -> list:
    """Every emitter in the scene: streetlight lamps and FV taillights."""
    cached = state.__dict__.get("_beacons")
    if cached is None:
        cached = _scene_beacons(state)
        object.__setattr__(state, "_beacons", cached)
    return list(cached)


def _scene_beacons(state: SceneState) -> tuple:
    road = state.road
    out = list(_streetlight_beacons(state.streetlights, road))
    for v in state.forwarding:
        normal = -road.tangent(v.s)
        for side in (-1, 1):
            # left taillight sits at +lateral (left of the road direction)
            lat = v.lateral - side * v.taillight_separation / 2
            pos = road.to_world(v.s, lat, v.taillight_height)
            out.append(Beacon("FV", v.id, pos, normal, v.taillight, side))
    return tuple(out)


def _occluders(state: SceneState, extr: CameraExtrinsics):
    """Rear faces of forwarding vehicles in camera coordinates."""
    road = state.road
    faces = []
    for v in state.forwarding:
        corners = road.to_world([v.s, v.s], [v.lateral + v.body_width / 2,
                                             v.lateral - v.body_width / 2], 0.0)
        cam = extr.to_camera(corners)
        if np.any(cam[:, 2] <= 0):
            continue
        b = np.arctan2(cam[:, 0], cam[:, 2])
        faces.append((v.id, float(cam[:, 2].mean()), b.min(), b.max(), v.body_height))
    return faces


def visible_beacons(state: SceneState, fov_horizontal: float, max_range: float,
                    occlusion: bool = True) -> list:
    """Beacons ahead of the host inside the horizontal FOV and ``max_range``.

    Taillights hidden behind a nearer vehicle's rear face are dropped when
    ``occlusion`` is set.
    """
    if not 0 < fov_horizontal <= math.pi:
        raise ValueError("fov_horizontal must be in (0, pi]")
    extr = state.camera_extrinsics()
    beacons = scene_beacons(state)
    if not beacons:
        return []
    pos = np.array([b.position for b in beacons])
    cam = extr.to_camera(pos)
    dist = np.linalg.norm(cam, axis=1)
    faces = _occluders(state, extr) if occlusion else []
    out = []
    for b, pc, D in zip(beacons, cam, dist):
        X, Y, Z = pc
        if Z <= 0 or D > max_range:
            continue
        bearing = math.atan2(X, Z)
        if abs(bearing) > fov_horizontal / 2:
            continue
        if faces and b.kind == "FV" and _hidden(b, pc, bearing, faces, state):
            continue
        to_cam = (extr.center - b.position) / D
        cos_phi = float(np.clip(np.dot(b.normal, to_cam), -1.0, 1.0))
        out.append(BeaconView(
            beacon=b, distance=float(D),
            incidence=math.acos(min(1.0, Z / D)), irradiance=math.acos(cos_phi),
            bearing=bearing, elevation=math.atan2(-Y, math.hypot(X, Z)),
            camera_point=pc))
    return out


def _hidden(b: Beacon, pc, bearing, faces, state: SceneState) -> bool:
    for vid, depth, bmin, bmax, body_h in faces:
        if vid == b.id or depth >= pc[2]:
            continue
        if bmin <= bearing <= bmax:
            # ray height where it crosses the occluder's depth
            z_at = state.camera_height - pc[1] * depth / pc[2]
            if 0.0 <= z_at <= body_h:
                return True
    return False


def streetlight_row(first_s: float, count: int, spacing: float, lateral: float,
                    lamp_height: float, panel: LedPanelSpec, first_id: int = 1) -> tuple:
    """Equally spaced streetlights with consecutive ids."""
    return tuple(
        StreetlightSpec(id=first_id + n, base=WorldPoint(first_s + n * spacing, lateral, 0.0),
                        lamp_height=lamp_height, spacing_to_next=spacing, panel=panel)
        for n in range(count))
