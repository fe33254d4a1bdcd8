"""Figures for sweep tables.

Plots are derived from the CSV rows, never the reverse. Output is SVG with the
creation date stripped so repeated runs write identical files.
"""

from __future__ import annotations

from itertools import groupby

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import BER_PARAMETERS  # noqa: E402

X_LABELS = {
    "resolution": "Image sensor resolution (MP)",
    "exposure": "Exposure time (s)",
    "fv_speed": "FV speed (km/h)",
    "sl_spacing": "Distance between streetlights (m)",
    "sinr": "SINR (dB)",
    "led_power": "LED power (W)",
}

_STYLE = {"svg.hashsalt": "occloc", "font.size": 9, "axes.grid": True, "grid.alpha": 0.3}


def _series(rows, column):
    xs = [float(r["value"]) for r in rows]
    ys = [float(r[column]) for r in rows]
    return xs, ys


def plot_sweep(rows: list, path, title: str = "") -> None:
    """Render one sweep table to ``path`` (format from the extension)."""
    if not rows:
        raise ValueError("no rows to plot")
    parameter = rows[0]["parameter"]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        if parameter in BER_PARAMETERS:
            for curve, group in groupby(rows, key=lambda r: r["curve"]):
                group = list(group)
                xs, ys = _series(group, "ber_monte_carlo")
                _, ya = _series(group, "ber_analytic")
                line, = ax.plot(xs, ys, "o", ms=3.5, label=f"{curve} (MC)")
                ax.plot(xs, ya, "-", lw=1, color=line.get_color(), label=f"{curve} (analytic)")
            ax.set_yscale("log")
            ax.set_ylabel("BER")
        elif parameter == "sl_spacing":
            xs, ys = _series(rows, "accuracy_percent")
            ax.plot(xs, ys, "o-", ms=3.5, lw=1)
            ax.set_ylabel("Measurement accuracy (%)")
            ax.set_ylim(0, 100)
        else:
            xs, ya = _series(rows, "avg_error_cm")
            _, ym = _series(rows, "max_error_cm")
            ax.plot(xs, ym, "s-", ms=3.5, lw=1, label="Maximum error")
            ax.plot(xs, ya, "o-", ms=3.5, lw=1, label="Average error")
            ax.set_ylabel("Error (cm)")
        if parameter == "exposure":
            ax.set_xscale("log")
        ax.set_xlabel(X_LABELS.get(parameter, parameter))
        if ax.get_legend_handles_labels()[0]:
            ax.legend(frameon=False, fontsize=7)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)


def plot_run(rows: list, path) -> None:
    """Estimated against true FV range over time, one line pair per vehicle."""
    fv_ids = sorted({k[2:-len("_range")] for r in rows for k in r
                     if k.startswith("fv") and k.endswith("_range")}, key=int)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for fid in fv_ids:
            pts = [(r["time"], r[f"fv{fid}_range"], r[f"fv{fid}_range_true"])
                   for r in rows if f"fv{fid}_range" in r]
            t, est, true = zip(*pts)
            line, = ax.plot(t, est, ".", ms=2, label=f"FV {fid} estimate")
            ax.plot(t, true, "-", lw=1, color=line.get_color(), label=f"FV {fid} true")
        ax.set_xlabel("Time (s)")
        ax.set_ylabel("Range (m)")
        if fv_ids:
            ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
