"""Frame-by-frame localization pipeline and parameter sweeps.

Each frame the host camera images every visible beacon, samples one S2-PSK
chip per beacon, and measures footprints. Beacons become usable once a full
id packet has been reassembled. Estimates published at frame ``k`` are built
from the measurements of frame ``k - 1`` to model processing latency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .camera import (CameraIntrinsics, ExposureSettings, SubPixelFootprintError,
                     panel_footprint, smear_footprint)
from .link import (PACKET_BITS, BeaconId, ChannelParams, PacketReceiver, ber_s2psk,
                   blur_penalty, channel_gain, led_state_error_prob, manchester_encode,
                   simulate_bits, sinr)
from .localization import (FvPositionEstimate, GeometryError, HvPositionState,
                           InsufficientBeaconsError, OcclusionError, estimate_fv_position,
                           select_roi, streetlight_range, update_hv_position, vehicle_range)
from .scene import (LedPanelSpec, ScenarioConfig, SceneState, VehicleSpec, scene_beacons,
                    step_scene, streetlight_row, visible_beacons)

KMH = 1.0 / 3.6


@dataclass(frozen=True)
class CameraConfig:
    focal_length: float = 16e-3
    pixel_pitch: float = 4e-6
    width_px: int = 3000
    height_px: int = 2000
    exposure_time: float = 1.0 / 2000
    frame_rate: float = 30.0

    def __post_init__(self):
        # long exposures lower the achievable frame rate
        if self.exposure_time > 1.0 / self.frame_rate:
            object.__setattr__(self, "frame_rate", 1.0 / self.exposure_time)

    @classmethod
    def from_megapixels(cls, megapixels: float, focal_length: float = 16e-3,
                        sensor_width: float = 36e-3, sensor_height: float = 24e-3, **kw):
        intr = CameraIntrinsics.from_sensor(focal_length, sensor_width, sensor_height,
                                            megapixels)
        return cls(focal_length=focal_length, pixel_pitch=intr.pixel_pitch,
                   width_px=intr.width_px, height_px=intr.height_px, **kw)

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.focal_length, self.pixel_pitch, self.width_px,
                                self.height_px)

    def exposure(self) -> ExposureSettings:
        return ExposureSettings(self.exposure_time, self.frame_rate)


@dataclass(frozen=True)
class LinkConfig:
    channel: ChannelParams = ChannelParams()
    alpha: float = 1.0
    sigma_c: float = 0.0
    roi_guard_px: float = 4.0  # footprints closer than this interfere
    require_packet: bool = True
    noise: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    scenario: ScenarioConfig
    camera: CameraConfig = CameraConfig()
    link: LinkConfig = LinkConfig()
    collision_threshold: float = 10.0
    curvature_tolerance: float = math.radians(2.0)
    sl_panel_area: float = 0.01  # known to the receiver for every streetlight
    max_range: float = 200.0
    occlusion: bool = True
    continuous_area: bool = False  # skip rasterization (infinite resolution limit)

    @property
    def frame_period(self) -> float:
        return 1.0 / self.camera.frame_rate

    @property
    def n_frames(self) -> int:
        return max(1, int(math.floor(self.scenario.duration / self.frame_period + 1e-9)))


@dataclass(frozen=True)
class ErrorStats:
    average_error: float
    maximum_error: float
    accuracy_percent: float
    sample_count: int

    @classmethod
    def from_errors(cls, errors: Sequence[float], accuracy: float = float("nan")):
        e = np.abs(np.asarray(errors, dtype=float))
        if e.size == 0:
            return cls(float("nan"), float("nan"), accuracy, 0)
        return cls(float(e.mean()), float(e.max()), accuracy, int(e.size))

    @classmethod
    def from_trials(cls, trials: Sequence[Sequence[float]], accuracy: float = float("nan")):
        """Statistics over repeated runs, each run weighted equally.

        The average is the mean of the per-run mean errors; the maximum is the
        mean of the per-run worst single-frame errors.
        """
        runs = [np.abs(np.asarray(t, dtype=float)) for t in trials if len(t)]
        if not runs:
            return cls(float("nan"), float("nan"), accuracy, 0)
        return cls(float(np.mean([r.mean() for r in runs])),
                   float(np.mean([r.max() for r in runs])), accuracy,
                   sum(r.size for r in runs))


def accuracy_percent(errors: Sequence[float], ranges: Sequence[float]) -> float:
    """``100 * (1 - mean(|error| / range))`` with each ratio capped at 1."""
    e = np.abs(np.asarray(errors, dtype=float))
    r = np.asarray(ranges, dtype=float)
    if e.size == 0:
        return float("nan")
    if np.any(r <= 0):
        raise ValueError("ranges must be positive")
    return float(np.clip(100.0 * (1.0 - np.minimum(e / r, 1.0).mean()), 0.0, 100.0))


@dataclass
class PipelineResult:
    rows: list
    fv_errors: list
    hv_errors: list
    hv_ranges: list  # reference distances for accuracy, one per frame
    trace: list = field(default_factory=list)  # (time, beacon, s1, s2, sent chip) per link sample

    def fv_stats(self) -> ErrorStats:
        return ErrorStats.from_errors(self.fv_errors)

    def hv_scored(self) -> tuple:
        """``(errors, ranges)`` for the accuracy score.

        Scoring starts at the first position fix. A run that never obtains a
        fix scores every frame as a complete miss.
        """
        first = next((i for i, e in enumerate(self.hv_errors) if e is not None), 0)
        errs = self.hv_errors[first:]
        refs = self.hv_ranges[first:]
        return [r if e is None else e for e, r in zip(errs, refs)], refs

    def hv_stats(self) -> ErrorStats:
        errs = [e for e in self.hv_errors if e is not None]
        acc_err, refs = self.hv_scored()
        return ErrorStats.from_errors(errs, accuracy_percent(acc_err, refs)
                                      if refs else float("nan"))


def _packet(kind: str, obj, cfg: PipelineConfig) -> BeaconId:
    if kind == "SL":
        return BeaconId.streetlight(obj.id, obj.lamp_height, obj.spacing_to_next)
    return BeaconId.vehicle(obj.id, obj.taillight.area)


def _chip_phase(seed: int, kind: str, ident: int) -> int:
    rng = np.random.default_rng([seed, 0 if kind == "SL" else 1, ident])
    return int(rng.integers(2 * PACKET_BITS))


def _bbox(fp):
    o = fp.outline
    return o[:, 0].min(), o[:, 1].min(), o[:, 0].max(), o[:, 1].max()


def _near(b1, b2, guard):
    return not (b1[2] + guard < b2[0] or b2[2] + guard < b1[0]
                or b1[3] + guard < b2[1] or b2[3] + guard < b1[1])


def _camera_points(state: SceneState) -> dict:
    extr = state.camera_extrinsics()
    beacons = scene_beacons(state)
    if not beacons:
        return {}
    cam = extr.to_camera(np.array([b.position for b in beacons]))
    return {b.key: p for b, p in zip(beacons, cam.tolist())}


def _true_fv_ranges(state: SceneState) -> dict:
    """Mean direct distance from the camera to each vehicle's two taillights."""
    center = state.camera_extrinsics().center
    out = {}
    for b in scene_beacons(state):
        if b.kind == "FV":
            out.setdefault(b.id, []).append(float(np.linalg.norm(b.position - center)))
    return {k: float(np.mean(v)) for k, v in out.items()}


def _hv_reference(state: SceneState) -> Optional[float]:
    """True magnitude of the host's virtual coordinate ``(h, c)``.

    Measured from the foot of the last streetlight passed (the first one if
    none has been passed yet); this is the denominator of the accuracy ratio.
    """
    if not state.streetlights:
        return None
    host = state.host
    behind = [sl for sl in state.streetlights if sl.base.x <= host.s]
    ref = max(behind, key=lambda sl: sl.base.x) if behind else min(
        state.streetlights, key=lambda sl: sl.base.x)
    return math.hypot(ref.base.y - host.lateral, host.s - ref.base.x)


def _hv_truth(state: SceneState, anchor: int):
    """Ground-truth ``(h, c)`` of the host relative to streetlight ``anchor``."""
    sls = sorted(state.streetlights, key=lambda s: s.id)
    ref = min(sls, key=lambda s: abs(s.id - anchor))
    base_s = ref.base.x + (anchor - ref.id) * ref.spacing_to_next
    host = state.host
    return abs(ref.base.y - host.lateral), host.s - base_s


def _footprints(state, views, cfg: PipelineConfig, intr, expo, end_points):
    """Measured footprint per visible beacon key, smeared over the exposure."""
    out = {}
    for v in views:
        b = v.beacon
        try:
            fp = panel_footprint(b.panel, v.distance, intr, v.bearing, v.elevation, b.key)
        except SubPixelFootprintError:
            continue
        if fp.clipped:
            continue
        end = end_points.get(b.key)
        if end is not None and end[2] > 0:
            x0, y0, z0 = v.camera_point
            x1, y1, z1 = end
            vel = (intr.fx * (x1 / z1 - x0 / z0) / expo.exposure_time,
                   intr.fy * (y1 / z1 - y0 / z0) / expo.exposure_time)
            fp = smear_footprint(fp, vel, expo, intr)
        if cfg.continuous_area:
            fp = replace(fp, pixel_count=fp.continuous_area)
        if fp.pixel_count < 1:
            continue
        out[b.key] = (v, fp)
    return out


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    scen = cfg.scenario
    intr = cfg.camera.intrinsics()
    expo = cfg.camera.exposure()
    dt = cfg.frame_period
    hfov = intr.horizontal_fov
    rng = np.random.default_rng(scen.rng_seed)
    state = SceneState.from_config(scen)
    penalty = blur_penalty(cfg.link.sigma_c)
    ch = cfg.link.channel

    packets = {("SL", s.id): _packet("SL", s, cfg) for s in scen.streetlights}
    packets.update({("FV", v.id): _packet("FV", v, cfg) for v in scen.vehicles if not v.is_host})
    chips = {k: manchester_encode(p.to_bits()) for k, p in packets.items()}
    phases = {k: _chip_phase(scen.rng_seed, *k) for k in packets}
    receivers: dict = {}

    hv: Optional[HvPositionState] = None
    fv_prev: dict = {}
    pending = None  # measurements from the previous frame
    rows, fv_errors, hv_errors, hv_ranges, trace = [], [], [], [], []

    for k in range(cfg.n_frames):
        t = k * dt
        views = visible_beacons(state, hfov, cfg.max_range, cfg.occlusion)
        end_points = _camera_points(step_scene(state, expo.exposure_time))
        fps = _footprints(state, views, cfg, intr, expo, end_points)

        # --- link: one chip per beacon per frame
        boxes = {key: _bbox(fp) for key, (v, fp) in fps.items()}
        groups: dict = {}
        for key, (v, fp) in fps.items():
            groups.setdefault((v.beacon.kind, v.beacon.id), []).append(key)
        decoded = {}
        for bkey in sorted(groups):
            keys = groups[bkey]
            if bkey[0] == "FV" and len(keys) < 2:
                continue  # one taillight alone carries no S2-PSK symbol
            pes = []
            for key in keys:
                v, fp = fps[key]
                b = v.beacon
                H = channel_gain(b.panel.lambertian_order, intr.sensor_area, v.distance,
                                 v.incidence, v.irradiance)
                others = []
                for okey, (ov, ofp) in fps.items():
                    if (ov.beacon.kind, ov.beacon.id) == bkey:
                        continue
                    if _near(boxes[key], boxes[okey], cfg.link.roi_guard_px):
                        others.append(channel_gain(ov.beacon.panel.lambertian_order,
                                                   intr.sensor_area, ov.distance,
                                                   ov.incidence, ov.irradiance))
                chp = replace(ch, interferer_gains=tuple(others))
                s = sinr(chp, H, b.panel.emitted_optical_power) * penalty
                pes.append(led_state_error_prob(s) if cfg.link.noise else 0.0)
            if len(pes) == 1:
                pes = pes * 2
            idx = (k + phases[bkey]) % (2 * PACKET_BITS)
            chip = chips[bkey][idx]
            flips = rng.random(2) < cfg.link.alpha * np.asarray(pes[:2])
            # LED 1 is sampled in the high half of its carrier cycle
            s1 = 1 ^ int(flips[0])
            s2 = 1 ^ chip ^ int(flips[1])
            trace.append((t, f"{bkey[0]}-{bkey[1]}", s1, s2, chip))
            rx = receivers.setdefault(bkey, PacketReceiver())
            got = rx.push(k, idx, s1 ^ s2) if cfg.link.require_packet else packets[bkey]
            if got is not None and got.kind == bkey[0] and got.id == bkey[1]:
                decoded[bkey] = got

        # --- ROI grouping and measurements for this frame
        detections = [(decoded.get((v.beacon.kind, v.beacon.id)), fp) for v, fp in fps.values()]
        sl_meas, fv_meas = [], {}
        for roi in select_roi(detections):
            if roi.beacon.kind == "SL":
                sl_meas.append(streetlight_range(roi.beacon, roi.footprints[0],
                                                 cfg.sl_panel_area, intr, t))
            else:
                fl = roi.footprints[0] if len(roi.footprints) > 0 else None
                fr = roi.footprints[1] if len(roi.footprints) > 1 else None
                try:
                    fv_meas[roi.beacon.id] = vehicle_range(roi.beacon, fl, fr, intr, t)
                except (OcclusionError, SubPixelFootprintError):
                    pass

        # --- estimation from the previous frame's measurements
        hv_status = "none"
        fv_est: dict = {}
        if pending is not None:
            p_sl, p_fv = pending
            try:
                hv = update_hv_position(hv, p_sl, dt, state.camera_height,
                                        cfg.curvature_tolerance)
                hv_status = "curved" if hv.curved else "ok"
            except (InsufficientBeaconsError, GeometryError):
                hv_status = "hold" if hv is not None else "none"
            for fid, m in p_fv.items():
                fv_est[fid] = estimate_fv_position(hv, m, fv_prev.get(fid), dt,
                                                   cfg.collision_threshold)
            fv_prev.update(fv_est)
        pending = (sl_meas, fv_meas)

        # --- errors against ground truth at publication time
        row = {"frame": k, "time": t, "host_s": state.host.s, "hv_status": hv_status}
        ref = _hv_reference(state)
        if hv is not None:
            h_true, c_true = _hv_truth(state, hv.anchor_sl)
            err = math.hypot(hv.h - h_true, hv.c - c_true)
            row.update(hv_h=hv.h, hv_c=hv.c, hv_anchor=hv.anchor_sl, hv_speed=hv.speed_estimate,
                       hv_h_true=h_true, hv_c_true=c_true, hv_error=err)
        else:
            err = None
        if ref is not None:
            hv_errors.append(err)
            hv_ranges.append(ref)
        truth = _true_fv_ranges(state) if fv_est else {}
        for fid, est in sorted(fv_est.items()):
            true_r = truth[fid]
            fe = abs(est.range - true_r)
            fv_errors.append(fe)
            row.update({f"fv{fid}_range": est.range, f"fv{fid}_range_true": true_r,
                        f"fv{fid}_bearing": est.bearing, f"fv{fid}_error": fe,
                        f"fv{fid}_collision": int(est.collision_flag),
                        f"fv{fid}_unanchored": int(est.unanchored)})
        rows.append(row)
        state = step_scene(state, dt)

    return PipelineResult(rows, fv_errors, hv_errors, hv_ranges, trace)


# --- sweeps --------------------------------------------------------------------

ERROR_PARAMETERS = ("resolution", "exposure", "fv_speed", "sl_spacing")
BER_PARAMETERS = ("sinr", "led_power")
PARAMETERS = ERROR_PARAMETERS + BER_PARAMETERS


@dataclass(frozen=True)
class ExperimentSpec:
    base: PipelineConfig
    parameter: str
    values: tuple
    trials: int = 5
    rng_seed: int = 0
    start_jitter: float = 0.0  # m, uniform host start offset per trial
    gap_jitter: float = 0.0  # m, uniform FV gap offset per trial
    lateral_jitter: float = 0.0  # m, uniform FV lateral offset per trial
    curves: tuple = ()  # sigma_c values (sinr) or data rates in bps (led_power)
    mc_bits: int = 100_000
    reference_distance: float = 50.0  # m, link geometry for the led_power sweep
    bandwidth_per_bps: float = 1.0  # Hz per payload bit/s
    sl_row_margin: float = 250.0  # m of streetlights beyond the host's travel

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ValueError(f"unknown swept parameter {self.parameter!r}; "
                             f"expected one of {', '.join(PARAMETERS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.values:
            raise ValueError("values must be nonempty")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "curves", tuple(float(c) for c in self.curves))


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def _apply(base: PipelineConfig, parameter: str, value: float,
           spec: ExperimentSpec) -> PipelineConfig:
    cam = base.camera
    scen = base.scenario
    if parameter == "resolution":
        cam = CameraConfig.from_megapixels(value, focal_length=cam.focal_length,
                                           exposure_time=cam.exposure_time,
                                           frame_rate=cam.frame_rate)
    elif parameter == "exposure":
        cam = replace(cam, exposure_time=value, frame_rate=30.0)
    elif parameter == "fv_speed":
        vehicles = tuple(v if v.is_host else replace(v, speed=value * KMH)
                         for v in scen.vehicles)
        scen = replace(scen, vehicles=vehicles)
    elif parameter == "sl_spacing":
        scen = _respace(scen, value, base, spec)
    return replace(base, camera=cam, scenario=scen)


def _respace(scen: ScenarioConfig, spacing: float, base: PipelineConfig,
             spec: ExperimentSpec) -> ScenarioConfig:
    tmpl = scen.streetlights[0]
    host = scen.host
    end = host.s + host.speed * scen.duration + spec.sl_row_margin
    first = tmpl.base.x
    count = int(math.ceil((end - first) / spacing)) + 1
    row = streetlight_row(first, count, spacing, tmpl.base.y, tmpl.lamp_height, tmpl.panel,
                          tmpl.id)
    return replace(scen, streetlights=row)


def _jitter(cfg: PipelineConfig, spec: ExperimentSpec, seed: int) -> PipelineConfig:
    rng = np.random.default_rng(seed)
    ds = rng.uniform(-spec.start_jitter, spec.start_jitter) if spec.start_jitter else 0.0
    dg = rng.uniform(-spec.gap_jitter, spec.gap_jitter) if spec.gap_jitter else 0.0
    dl = rng.uniform(-spec.lateral_jitter, spec.lateral_jitter) if spec.lateral_jitter else 0.0
    vehicles = tuple(replace(v, s=v.s + ds) if v.is_host
                     else replace(v, s=v.s + ds + dg, lateral=v.lateral + dl)
                     for v in cfg.scenario.vehicles)
    return replace(cfg, scenario=replace(cfg.scenario, vehicles=vehicles, rng_seed=seed))


def _error_row(spec: ExperimentSpec, value: float) -> dict:
    fv_trials, hv_trials, acc_errs, acc_refs = [], [], [], []
    for trial in range(spec.trials):
        seed = trial_seed(spec.rng_seed, trial)
        cfg = _apply(_jitter(spec.base, spec, seed), spec.parameter, value, spec)
        res = run_pipeline(cfg)
        fv_trials.append(res.fv_errors)
        hv_trials.append([e for e in res.hv_errors if e is not None])
        e, r = res.hv_scored()
        acc_errs += e
        acc_refs += r
    if spec.parameter == "sl_spacing":
        stats = ErrorStats.from_trials(hv_trials, accuracy_percent(acc_errs, acc_refs))
    else:
        stats = ErrorStats.from_trials(fv_trials)
    return {"parameter": spec.parameter, "value": value,
            "avg_error_cm": 100.0 * stats.average_error,
            "max_error_cm": 100.0 * stats.maximum_error,
            "accuracy_percent": stats.accuracy_percent, "samples": stats.sample_count}


def _ber_rows(spec: ExperimentSpec) -> list:
    ch = spec.base.link.channel
    alpha = spec.base.link.alpha
    rng = np.random.default_rng(spec.rng_seed)
    bits = rng.integers(0, 2, spec.mc_bits, dtype=np.int8)
    rows = []
    if spec.parameter == "sinr":
        curves = spec.curves or (0.1, 0.5, 1.0)
        for sc in curves:
            for value in spec.values:
                s = 10.0 ** (value / 10.0) * blur_penalty(sc)
                rows.append(_ber_row(spec, value, f"sigma_c={sc:g}", s, alpha, bits, rng))
    else:
        curves = spec.curves or (1.0, 2.0, 5.0)
        H = channel_gain(1.0, spec.base.camera.intrinsics().sensor_area,
                         spec.reference_distance, 0.0, 0.0)
        for rate in curves:
            chp = replace(ch, bandwidth=rate * spec.bandwidth_per_bps, interferer_gains=())
            for value in spec.values:
                s = sinr(chp, H, value) * blur_penalty(spec.base.link.sigma_c)
                rows.append(_ber_row(spec, value, f"rate={rate:g}bps", s, alpha, bits, rng))
    return rows


def _ber_row(spec, value, curve, s, alpha, bits, rng) -> dict:
    pe = led_state_error_prob(s)
    ber = ber_s2psk(pe, alpha)
    errs = int(np.count_nonzero(simulate_bits(bits, pe, rng, alpha) != bits))
    return {"parameter": spec.parameter, "value": value, "curve": curve, "sinr": s,
            "p_e": pe, "ber_analytic": ber, "ber_monte_carlo": errs / bits.size,
            "bits": int(bits.size)}


def sweep(spec: ExperimentSpec) -> list:
    """One row per swept value (per curve for the BER sweeps), sorted by value."""
    if spec.parameter in BER_PARAMETERS:
        return _ber_rows(spec)
    return [_error_row(spec, v) for v in sorted(spec.values)]


ERROR_COLUMNS = ("parameter", "value", "avg_error_cm", "max_error_cm", "accuracy_percent",
                 "samples")
BER_COLUMNS = ("parameter", "value", "curve", "sinr", "p_e", "ber_analytic",
               "ber_monte_carlo", "bits")


def sweep_columns(parameter: str) -> tuple:
    return BER_COLUMNS if parameter in BER_PARAMETERS else ERROR_COLUMNS
