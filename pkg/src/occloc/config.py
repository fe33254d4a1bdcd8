"""YAML scenario and experiment files.

Lengths are meters and speeds km/h unless the key carries a unit suffix
(``_mm``, ``_um``, ``_cm``, ``_cm2``, ``_deg``, ``_s``, ``_hz``). Unknown keys
are rejected so that typos surface as errors naming the offending field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional

import yaml

from .harness import (KMH, PARAMETERS, CameraConfig, ExperimentSpec, LinkConfig,
                      PipelineConfig)
from .link import ChannelParams
from .scene import LedPanelSpec, ScenarioConfig, StreetlightSpec, VehicleSpec, WorldPoint, \
    streetlight_row


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class _Section:
    """Typed accessor over one mapping that tracks which keys were read."""

    def __init__(self, data: Any, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected a mapping")
        self.data = data
        self.path = path
        self.seen: set = set()

    def _name(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default=None):
        self.seen.add(key)
        return self.data.get(key, default)

    def num(self, key: str, default=None, *, positive=False, nonneg=False, required=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(self._name(key), "required")
            return default
        v = self.data[key]
        if isinstance(v, str) and "/" in v:
            try:
                v = float(Fraction(v.strip()))
            except (ValueError, ZeroDivisionError):
                raise ConfigError(self._name(key), f"not a number: {v!r}") from None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(self._name(key), f"expected a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(self._name(key), "must be finite")
        if positive and v <= 0:
            raise ConfigError(self._name(key), f"must be positive, got {v:g}")
        if nonneg and v < 0:
            raise ConfigError(self._name(key), f"must be non-negative, got {v:g}")
        return v

    def integer(self, key: str, default=None, *, minimum=None, required=False):
        v = self.num(key, default, required=required)
        if v is None:
            return None
        if v != int(v):
            raise ConfigError(self._name(key), f"expected an integer, got {v:g}")
        if minimum is not None and v < minimum:
            raise ConfigError(self._name(key), f"must be >= {minimum}")
        return int(v)

    def flag(self, key: str, default: bool) -> bool:
        self.seen.add(key)
        v = self.data.get(key, default)
        if not isinstance(v, bool):
            raise ConfigError(self._name(key), f"expected true/false, got {v!r}")
        return v

    def numbers(self, key: str, default=None, *, required=False) -> Optional[list]:
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(self._name(key), "required")
            return default
        v = self.data[key]
        if not isinstance(v, list) or not v:
            raise ConfigError(self._name(key), "expected a nonempty list of numbers")
        out = []
        for i, x in enumerate(v):
            sub = _Section({"v": x}, f"{self._name(key)}[{i}]")
            out.append(sub.num("v"))
        return out

    def section(self, key: str) -> "_Section":
        self.seen.add(key)
        return _Section(self.data.get(key), self._name(key))

    def done(self) -> None:
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise ConfigError(self._name(extra[0]), "unknown key")


def _panel(sec: _Section, default_cm: float = 10.0) -> LedPanelSpec:
    p = LedPanelSpec(width=sec.num("width_cm", default_cm, positive=True) / 100.0,
                     height=sec.num("height_cm", default_cm, positive=True) / 100.0,
                     emitted_optical_power=sec.num("power_w", 1.0, positive=True),
                     lambertian_order=sec.num("lambertian_order", 1.0, nonneg=True))
    sec.done()
    return p


def _streetlights(sec: _Section) -> tuple:
    if not sec.data:
        return ()
    panel = _panel(sec.section("panel"))
    out = streetlight_row(first_s=sec.num("first_s", 0.0),
                          count=sec.integer("count", required=True, minimum=0),
                          spacing=sec.num("spacing", 25.0, positive=True),
                          lateral=sec.num("lateral", -10.0),
                          lamp_height=sec.num("lamp_height", 7.0, positive=True),
                          panel=panel, first_id=sec.integer("first_id", 1, minimum=0))
    sec.done()
    return out


def _vehicle(sec: _Section, ident: int, host: bool) -> VehicleSpec:
    tl = _panel(sec.section("taillight"))
    v = VehicleSpec(id=ident, s=sec.num("s", 0.0), lateral=sec.num("lateral", 0.0),
                    speed=sec.num("speed_kmh", 0.0, nonneg=True) * KMH, is_host=host,
                    taillight=tl,
                    taillight_separation=sec.num("taillight_separation", 1.5, positive=True),
                    taillight_height=sec.num("taillight_height", 0.8, nonneg=True),
                    body_width=sec.num("body_width", 1.8, positive=True),
                    body_height=sec.num("body_height", 1.5, positive=True))
    sec.done()
    return v


def scenario_from_dict(sec: _Section, seed: int) -> ScenarioConfig:
    if not sec.has("host"):
        raise ConfigError(sec._name("host"), "required: exactly one host vehicle")
    host = _vehicle(sec.section("host"), 0, True)
    vehicles = [host]
    raw = sec.raw("vehicles", []) or []
    if not isinstance(raw, list):
        raise ConfigError(sec._name("vehicles"), "expected a list")
    for i, item in enumerate(raw):
        vs = _Section(item, f"{sec._name('vehicles')}[{i}]")
        ident = vs.integer("id", i + 1, minimum=1)
        vehicles.append(_vehicle(vs, ident, False))
    ids = [v.id for v in vehicles]
    if len(set(ids)) != len(ids):
        raise ConfigError(sec._name("vehicles"), "vehicle ids must be unique")
    try:
        scen = ScenarioConfig(
            streetlights=_streetlights(sec.section("streetlights")),
            vehicles=tuple(vehicles),
            road_curvature=sec.num("road_curvature", 0.0),
            duration=sec.num("duration", 10.0, positive=True),
            time_step=1.0 / 30.0,
            rng_seed=seed,
            camera_height=sec.num("camera_height", 1.5, positive=True))
    except ValueError as exc:
        raise ConfigError(sec.path, str(exc)) from None
    sec.done()
    return scen


def camera_from_dict(sec: _Section) -> CameraConfig:
    F = sec.num("focal_length_mm", 16.0, positive=True) * 1e-3
    exposure = sec.num("exposure_s", 1.0 / 2000, positive=True)
    fps = sec.num("frame_rate", 30.0, positive=True)
    if sec.has("megapixels"):
        mp = sec.num("megapixels", positive=True)
        sensor = sec.numbers("sensor_mm", [36.0, 24.0])
        if len(sensor) != 2 or min(sensor) <= 0:
            raise ConfigError(sec._name("sensor_mm"), "expected [width, height] > 0")
        for key in ("pixel_um", "resolution"):
            if sec.has(key):
                raise ConfigError(sec._name(key), "conflicts with megapixels")
        cam = CameraConfig.from_megapixels(mp, F, sensor[0] * 1e-3, sensor[1] * 1e-3,
                                           exposure_time=exposure, frame_rate=fps)
    else:
        res = sec.numbers("resolution", [3000, 2000])
        if len(res) != 2 or min(res) < 1 or any(r != int(r) for r in res):
            raise ConfigError(sec._name("resolution"), "expected [width_px, height_px]")
        cam = CameraConfig(focal_length=F, pixel_pitch=sec.num("pixel_um", 4.0, positive=True)
                           * 1e-6, width_px=int(res[0]), height_px=int(res[1]),
                           exposure_time=exposure, frame_rate=fps)
    sec.done()
    return cam


def link_from_dict(sec: _Section) -> LinkConfig:
    base = ChannelParams()
    ch = ChannelParams(kappa=sec.num("kappa", base.kappa, nonneg=True),
                       noise_psd=sec.num("noise_psd", base.noise_psd, nonneg=True),
                       bandwidth=sec.num("bandwidth_hz", base.bandwidth, positive=True),
                       power_conversion=sec.num("power_conversion", base.power_conversion,
                                                nonneg=True))
    cfg = LinkConfig(channel=ch, alpha=sec.num("alpha", 1.0, nonneg=True),
                     sigma_c=sec.num("sigma_c", 0.0, nonneg=True),
                     roi_guard_px=sec.num("roi_guard_px", 4.0, nonneg=True),
                     require_packet=sec.flag("require_packet", True),
                     noise=sec.flag("noise", True))
    sec.done()
    return cfg


def pipeline_from_dict(data: dict, seed_override: Optional[int] = None) -> PipelineConfig:
    root = _Section(data, "")
    seed = root.integer("seed", 0, minimum=0)
    if seed_override is not None:
        seed = seed_override
    scen = scenario_from_dict(root.section("scenario"), seed)
    cam = camera_from_dict(root.section("camera"))
    link = link_from_dict(root.section("link"))
    p = root.section("pipeline")
    cfg = PipelineConfig(
        scenario=scen, camera=cam, link=link,
        collision_threshold=p.num("collision_threshold", 10.0, positive=True),
        curvature_tolerance=math.radians(p.num("curvature_tolerance_deg", 2.0, positive=True)),
        sl_panel_area=p.num("sl_panel_area_cm2", 100.0, positive=True) * 1e-4,
        max_range=p.num("max_range", 200.0, positive=True),
        occlusion=p.flag("occlusion", True),
        continuous_area=p.flag("continuous_area", False))
    p.done()
    root.seen.update({"sweep", "sweeps"})
    root.done()
    return cfg


# units the file uses for each swept parameter, converted to what the harness expects
_SWEEP_UNITS = {"resolution": 1.0, "exposure": 1.0, "fv_speed": 1.0, "sl_spacing": 1.0,
                "sinr": 1.0, "led_power": 1.0}


def sweeps_from_dict(data: dict, seed_override: Optional[int] = None) -> list:
    base = pipeline_from_dict(data, seed_override)
    root = _Section(data, "")
    if root.has("sweep") and root.has("sweeps"):
        raise ConfigError("sweeps", "give either 'sweep' or 'sweeps', not both")
    if root.has("sweep"):
        items = [("sweep", data["sweep"])]
    elif root.has("sweeps"):
        raw = data["sweeps"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("sweeps", "expected a nonempty list")
        items = [(f"sweeps[{i}]", s) for i, s in enumerate(raw)]
    else:
        raise ConfigError("sweep", "required for the sweep subcommand")
    out = []
    for path, item in items:
        sec = _Section(item, path)
        param = sec.raw("parameter")
        if param not in PARAMETERS:
            raise ConfigError(sec._name("parameter"),
                              f"unknown swept parameter {param!r}; expected one of "
                              f"{', '.join(PARAMETERS)}")
        values = [v * _SWEEP_UNITS[param] for v in sec.numbers("values", required=True)]
        seed = base.scenario.rng_seed
        spec = ExperimentSpec(
            base=base, parameter=param, values=tuple(values),
            trials=sec.integer("trials", 5, minimum=1),
            rng_seed=seed,
            start_jitter=sec.num("start_jitter", 0.0, nonneg=True),
            gap_jitter=sec.num("gap_jitter", 0.0, nonneg=True),
            lateral_jitter=sec.num("lateral_jitter", 0.0, nonneg=True),
            curves=tuple(sec.numbers("curves", [])),
            mc_bits=sec.integer("mc_bits", 100_000, minimum=1),
            reference_distance=sec.num("reference_distance", 50.0, positive=True),
            bandwidth_per_bps=sec.num("bandwidth_per_bps", 1.0, positive=True),
            sl_row_margin=sec.num("sl_row_margin", 250.0, nonneg=True))
        name = sec.raw("name", param)
        if not isinstance(name, str) or not name:
            raise ConfigError(sec._name("name"), "expected a nonempty string")
        sec.done()
        out.append((name, spec))
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise ConfigError("sweeps", "sweep names must be unique")
    return out


def load_yaml(path) -> dict:
    """Parse a YAML config file; syntax errors become :class:`ConfigError`."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML syntax error: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a mapping at the top level")
    return data
