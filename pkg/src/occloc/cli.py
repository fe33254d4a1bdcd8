"""Command-line front end: ``occloc {simulate,sweep,decode,distance}``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 I/O, 5 malformed trace.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from .camera import SubPixelFootprintError
from .config import ConfigError, load_yaml, pipeline_from_dict, sweeps_from_dict
from .harness import ErrorStats, accuracy_percent, run_pipeline, sweep, sweep_columns
from .link import TraceFormatError, decode_trace, write_trace
from .localization import distance_from_pixels

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_TRACE = 5


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10g}"
    return str(v)


def write_csv(path: Path, rows: list, columns=None) -> None:
    """Header row plus one line per dict; missing cells are left empty."""
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) if c in r and r[c] is not None else "" for c in columns])


def _summary_rows(res) -> list:
    fv = res.fv_stats()
    errs, refs = res.hv_scored()
    hv = ErrorStats.from_errors([e for e in res.hv_errors if e is not None],
                                accuracy_percent(errs, refs))
    return [
        {"metric": "fv_avg_error_m", "value": fv.average_error},
        {"metric": "fv_max_error_m", "value": fv.maximum_error},
        {"metric": "fv_samples", "value": fv.sample_count},
        {"metric": "hv_avg_error_m", "value": hv.average_error},
        {"metric": "hv_max_error_m", "value": hv.maximum_error},
        {"metric": "hv_accuracy_percent", "value": hv.accuracy_percent},
        {"metric": "hv_samples", "value": hv.sample_count},
    ]


def cmd_simulate(args) -> int:
    cfg = pipeline_from_dict(load_yaml(args.config), args.seed)
    res = run_pipeline(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "frames.csv", res.rows)
    write_csv(out / "summary.csv", _summary_rows(res), ("metric", "value"))
    if args.trace:
        with open(out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
            write_trace(res.trace, fh, with_truth=True)
    if args.plot:
        from .plotting import plot_run
        plot_run(res.rows, out / "frames.svg")
    print(f"wrote {len(res.rows)} frames to {out / 'frames.csv'}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    specs = sweeps_from_dict(load_yaml(args.config), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, spec in specs:
        rows = sweep(spec)
        path = out / f"{name}.csv"
        write_csv(path, rows, sweep_columns(spec.parameter))
        if args.plot:
            from .plotting import plot_sweep
            plot_sweep(rows, out / f"{name}.svg")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_decode(args) -> int:
    with open(args.trace, newline="", encoding="utf-8") as fh:
        decoded = decode_trace(fh)
    for bid, (bits, truth) in decoded.items():
        line = f"{bid}: {''.join(map(str, bits))}"
        if truth is not None:
            errors = sum(b != t for b, t in zip(bits, truth))
            line += f" ber={errors / len(bits):.6g} ({errors}/{len(bits)})"
        print(line)
    return EXIT_OK


def cmd_distance(args) -> int:
    for name in ("area_cm2", "pixels", "focal_mm", "pixel_um"):
        if not getattr(args, name) > 0:
            raise UsageError(f"--{name.replace('_', '-')} must be positive")
    from .camera import CameraIntrinsics
    intr = CameraIntrinsics(focal_length=args.focal_mm * 1e-3, pixel_pitch=args.pixel_um * 1e-6,
                            width_px=1, height_px=1)
    try:
        D = distance_from_pixels(args.area_cm2 * 1e-4, args.pixels, intr)
    except SubPixelFootprintError as exc:
        raise UsageError(str(exc)) from None
    print(f"{D:#.4g} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="occloc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario, write per-frame CSV")
    sim.add_argument("config", help="YAML scenario file")
    sim.add_argument("-o", "--out", default="out", help="output directory")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.add_argument("--plot", action="store_true", help="also write an SVG figure")
    sim.add_argument("--trace", action="store_true",
                     help="also write the per-frame LED-state trace (trace.csv)")
    sim.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="run parameter sweeps, one CSV per sweep")
    sw.add_argument("config", help="YAML file with a sweep or sweeps section")
    sw.add_argument("-o", "--out", default="out", help="output directory")
    sw.add_argument("--seed", type=int, help="override the config seed")
    sw.add_argument("--plot", action="store_true", help="also write one SVG per sweep")
    sw.set_defaults(func=cmd_sweep)

    dec = sub.add_parser("decode", help="XOR-decode a recorded S2-PSK frame trace")
    dec.add_argument("trace", help="trace CSV (time,beacon_id,s1,s2[,bit])")
    dec.set_defaults(func=cmd_decode)

    dist = sub.add_parser("distance", help="distance from a panel's pixel count")
    dist.add_argument("--area-cm2", type=float, required=True, help="panel area (cm^2)")
    dist.add_argument("--pixels", type=float, required=True, help="pixel count n_IS")
    dist.add_argument("--focal-mm", type=float, required=True, help="focal length (mm)")
    dist.add_argument("--pixel-um", type=float, required=True, help="pixel pitch (um)")
    dist.set_defaults(func=cmd_distance)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("occloc: error: --seed must be non-negative", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"occloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"occloc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TraceFormatError as exc:
        print(f"occloc: trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except OSError as exc:
        print(f"occloc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:  # invalid values that passed the schema checks
        print(f"occloc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
