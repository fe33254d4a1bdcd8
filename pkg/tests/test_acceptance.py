"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a single ``criterion N: PASS|FAIL`` line (collected into the
terminal summary by ``conftest.py``) and then asserts. Sweep criteria load the
shipped files in ``configs/`` so the CLI and the tests exercise the same setup.

Run just this module with ``pytest tests/test_acceptance.py -v``; the 10-seed
panels carry the ``slow`` marker (``-m "not slow"`` skips them).
"""

import itertools
import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from occloc.camera import CameraIntrinsics, SubPixelFootprintError, panel_footprint
from occloc.cli import main
from occloc.config import load_yaml, sweeps_from_dict
from occloc.harness import CameraConfig, sweep
from occloc.link import (S2pskWaveform, ber_s2psk, decode_frame, simulate_bits,
                         transmit_and_sample)
from occloc.localization import distance_from_pixels, lateral_distance, longitudinal_offset
from occloc.scene import LedPanelSpec

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SEEDS = range(10)
SWEEP_BUDGET_S = 60.0


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[n] = line
    print(line)


def load_sweep(name: str, seed=None):
    (_, spec), = sweeps_from_dict(load_yaml(CONFIGS / name), seed)
    return spec


def timed_sweep(spec):
    t0 = time.perf_counter()
    rows = sweep(spec)
    return rows, time.perf_counter() - t0


def column(rows, key):
    return [r[key] for r in rows]


def strictly(seq, sign):
    return all(sign * (b - a) > 0 for a, b in zip(seq, seq[1:]))


def fmt(xs):
    return "[" + ", ".join(f"{x:.1f}" for x in xs) + "]"


# --- 1: triangulation round trip

def test_criterion_1_triangulation_exactness():
    rng = np.random.default_rng(1)
    n = 10_000
    t0 = time.perf_counter()
    h = rng.uniform(1.0, 30.0, n)
    d = rng.uniform(5.0, 150.0, n)
    c = rng.uniform(0.0, 1.0, n) * d
    worst = 0.0
    for hi, ci, di in zip(h, c, d):
        a1 = math.sqrt(ci * ci + hi * hi)
        a2 = math.sqrt((ci + di) ** 2 + hi * hi)
        off = longitudinal_offset(a1, a2, di)
        he = lateral_distance(a1, off.value)
        worst = max(worst, math.hypot(he - hi, off.value - ci) / math.hypot(hi, ci))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 1.0
    report(1, ok, f"max rel error {worst:.2e}, {elapsed:.2f} s")
    assert ok


# --- 2: ranging round trip

def test_criterion_2_ranging_round_trip():
    intr = CameraIntrinsics(16e-3, 4e-6, 3000, 2000)
    panel = LedPanelSpec(0.1, 0.1)
    t0 = time.perf_counter()
    n_px, rel = [], []
    for D in np.linspace(5.0, 200.0, 2000):
        try:
            fp = panel_footprint(panel, D, intr)
        except SubPixelFootprintError:
            continue
        if fp.pixel_count < 1:
            continue
        n_px.append(fp.pixel_count)
        rel.append(abs(distance_from_pixels(panel.area, fp.pixel_count, intr) / D - 1))
    elapsed = time.perf_counter() - t0
    n_px, rel = np.array(n_px), np.array(rel)
    w400 = rel[n_px >= 400].max()
    w25 = rel[n_px >= 25].max()
    ok = w400 <= 0.02 and w25 <= 0.10 and elapsed < 5.0
    report(2, ok, f"worst {100 * w400:.2f}% at n>=400, {100 * w25:.2f}% at n>=25, "
                  f"{elapsed:.2f} s")
    assert ok


# --- 3: desk-scale ranging

def test_criterion_3_desk_scale_one_percent():
    intr = CameraConfig.from_megapixels(10.0).intrinsics()
    panel = LedPanelSpec(0.1, 0.1)
    D = np.linspace(0.6, 2.55, 300)
    rel = np.array([abs(distance_from_pixels(panel.area,
                                             panel_footprint(panel, x, intr).pixel_count,
                                             intr) / x - 1) for x in D])
    share = float(np.mean(rel < 0.01))
    ok = share >= 0.90
    report(3, ok, f"{100 * share:.1f}% of distances under 1% error, worst "
                  f"{100 * rel.max():.2f}%")
    assert ok


# --- 4: codec identity

def _roundtrip(bits):
    wf = S2pskWaveform(list(bits), clock_rate=120.0, cycles_per_bit=4)
    return [decode_frame(s) for s in transmit_and_sample(wf, 0.0, 30.0,
                                                         np.random.default_rng(0))]


def test_criterion_4_codec_identity():
    failures = 0
    count = 0
    for length in range(1, 13):
        for bits in itertools.product((0, 1), repeat=length):
            count += 1
            failures += _roundtrip(bits) != list(bits)
    rng = np.random.default_rng(4)
    for _ in range(1000):
        bits = rng.integers(0, 2, 32).tolist()
        count += 1
        failures += _roundtrip(bits) != bits
    ok = failures == 0
    report(4, ok, f"{count - failures}/{count} strings recovered")
    assert ok


# --- 5: BER law

def test_criterion_5_ber_law():
    rng = np.random.default_rng(5)
    n = 200_000
    bits = rng.integers(0, 2, n, dtype=np.int8)
    z = {}
    for pe in (0.01, 0.1, 0.3):
        p = ber_s2psk(pe, 1.0)
        mc = np.count_nonzero(simulate_bits(bits, pe, rng, 1.0) != bits) / n
        z[pe] = abs(mc - p) / math.sqrt(p * (1 - p) / n)
    (_, spec), _ = sweeps_from_dict(load_yaml(CONFIGS / "sweep_ber.yaml"))
    rows = sweep(spec)
    curves = {}
    for r in rows:
        curves.setdefault(r["curve"], []).append(r["ber_analytic"])
    decreasing = all(strictly(v, -1) for v in curves.values())
    ok = all(v <= 3.0 for v in z.values()) and decreasing
    report(5, ok, ", ".join(f"p_e={k}: {v:.2f} sigma" for k, v in z.items())
           + f"; BER-vs-SINR strictly decreasing on {len(curves)} curves: {decreasing}")
    assert ok


# --- 6: resolution sweep

@pytest.mark.slow
def test_criterion_6_resolution_sweep():
    passed, first = 0, None
    for seed in SEEDS:
        rows, dt = timed_sweep(load_sweep("sweep_resolution.yaml", seed))
        avg, mx = column(rows, "avg_error_cm"), column(rows, "max_error_cm")
        good = (strictly(avg, -1) and strictly(mx, -1) and 5 <= avg[0] <= 40
                and 5 <= mx[0] <= 40 and dt < SWEEP_BUDGET_S)
        passed += good
        first = first or (avg[0], mx[0])
        print(f"seed {seed}: avg {fmt(avg)} max {fmt(mx)} {dt:.0f} s {good}")
    ok = passed == len(SEEDS)
    report(6, ok, f"{passed}/{len(SEEDS)} seeds strictly decreasing and in range; "
                  f"1 MP seed 0: avg {first[0]:.1f} cm, max {first[1]:.1f} cm")
    assert ok


# --- 7: exposure sweep

def test_criterion_7_exposure_sweep():
    rows, dt = timed_sweep(load_sweep("sweep_exposure.yaml"))
    mx = column(rows, "max_error_cm")
    ok = strictly(mx, +1) and 9 <= mx[-1] <= 40 and dt < SWEEP_BUDGET_S
    report(7, ok, f"max {fmt(mx)} cm, {mx[-1]:.1f} cm at 1/15 s, {dt:.0f} s")
    assert ok


# --- 8: FV speed sweep

@pytest.mark.slow
def test_criterion_8_fv_speed_sweep():
    passed = 0
    for seed in SEEDS:
        rows, dt = timed_sweep(load_sweep("sweep_fv_speed.yaml", seed))
        avg, mx = column(rows, "avg_error_cm"), column(rows, "max_error_cm")
        good = strictly(avg, +1) and strictly(mx, +1) and dt < SWEEP_BUDGET_S
        passed += good
        print(f"seed {seed}: avg {fmt(avg)} max {fmt(mx)} {dt:.0f} s {good}")
    ok = passed == len(SEEDS)
    report(8, ok, f"{passed}/{len(SEEDS)} seeds with avg and max increasing")
    assert ok


# --- 9: SL spacing sweep

def test_criterion_9_sl_spacing_sweep():
    rows, dt = timed_sweep(load_sweep("sweep_sl_spacing.yaml"))
    acc = column(rows, "accuracy_percent")
    spacing = column(rows, "value")
    k = int(np.argmax(acc))
    rises = k > 0 and acc[k] > acc[0]
    declines = k < len(acc) - 1 and acc[-1] < acc[k]
    ok = rises and declines and 80 <= acc[k] <= 95 and dt < SWEEP_BUDGET_S
    report(9, ok, f"peak {acc[k]:.1f}% at {spacing[k]:g} m, {acc[0]:.1f}% at "
                  f"{spacing[0]:g} m, {acc[-1]:.1f}% at {spacing[-1]:g} m, {dt:.0f} s")
    assert ok


# --- 10: determinism

def test_criterion_10_byte_identical_outputs(tmp_path):
    same = True
    for run in ("a", "b"):
        assert main(["simulate", str(CONFIGS / "scenario.yaml"), "-o",
                     str(tmp_path / run / "sim"), "--trace"]) == 0
        assert main(["sweep", str(CONFIGS / "sweep_ber.yaml"), "-o",
                     str(tmp_path / run / "ber")]) == 0
        assert main(["sweep", str(CONFIGS / "sweep_fv_speed.yaml"), "-o",
                     str(tmp_path / run / "fv")]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    for f in files:
        same &= (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ok = same and len(files) == 6
    report(10, ok, f"{len(files)} CSV files compared")
    assert ok
