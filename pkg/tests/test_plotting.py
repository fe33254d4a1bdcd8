import xml.etree.ElementTree as ET

import pytest

from occloc.plotting import plot_run, plot_sweep


def error_rows(parameter):
    return [{"parameter": parameter, "value": v, "avg_error_cm": 10.0 / v,
             "max_error_cm": 30.0 / v, "accuracy_percent": 90.0 - v}
            for v in (1.0, 2.0, 4.0)]


def ber_rows():
    return [{"parameter": "sinr", "value": v, "curve": c, "ber_analytic": 0.3 / (1 + v),
             "ber_monte_carlo": 0.3 / (1 + v)}
            for c in ("sigma_c=0.1", "sigma_c=0.5", "sigma_c=1") for v in (0.0, 4.0, 8.0)]


def n_lines(svg_path):
    root = ET.parse(svg_path).getroot()
    return sum(1 for g in root.iter("{http://www.w3.org/2000/svg}g")
               if g.get("id", "").startswith("line2d"))


@pytest.mark.parametrize("parameter", ["resolution", "exposure", "fv_speed", "sl_spacing"])
def test_error_sweep_figure(parameter, tmp_path):
    p = tmp_path / f"{parameter}.svg"
    plot_sweep(error_rows(parameter), p)
    assert p.stat().st_size > 0
    ET.parse(p)  # well-formed


def test_ber_figure_has_curve_pairs(tmp_path):
    p = tmp_path / "ber.svg"
    plot_sweep(ber_rows(), p)
    single = tmp_path / "one.svg"
    plot_sweep([r for r in ber_rows() if r["curve"] == "sigma_c=0.5"], single)
    # two more curves, each an MC and an analytic series drawn once more in the legend
    assert n_lines(p) - n_lines(single) == 2 * 2 * 2


def test_figures_are_reproducible(tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    plot_sweep(error_rows("resolution"), a)
    plot_sweep(error_rows("resolution"), b)
    assert a.read_bytes() == b.read_bytes()


def test_empty_rows_rejected(tmp_path):
    with pytest.raises(ValueError):
        plot_sweep([], tmp_path / "x.svg")


def test_run_figure(tmp_path):
    rows = [{"time": 0.0}, {"time": 0.1, "fv3_range": 10.2, "fv3_range_true": 10.0},
            {"time": 0.2, "fv3_range": 10.4, "fv3_range_true": 10.1}]
    p = tmp_path / "run.svg"
    plot_run(rows, p)
    ET.parse(p)
