import csv

import numpy as np
import pytest

from ouconsume.value import (
    delta_const,
    hjb_grid,
    hjb_residual,
    smooth_pasting_report,
    value_at,
    value_x,
    write_value_surface,
)
from ouconsume.functionals import build_curves


def test_delta_positive_and_equals_G_at_zero(vf, r_star):
    assert vf.delta > 0
    assert vf.G(r_star, 0.0) == pytest.approx(vf.delta, abs=1e-8)


def test_delta_rejects_mixed_curves(vf, params, r_star):
    other = build_curves(params, r_star + 0.5)
    mixed = dict(vf.curves, phi1=other["phi1"])
    with pytest.raises(ValueError):
        delta_const(mixed, params)


@pytest.mark.parametrize("x", [0.0, 1.0, 5.0])
def test_both_branches_at_barrier(vf, r_star, x):
    assert vf.G(r_star, x) == pytest.approx(x + vf.delta, abs=1e-8)
    assert vf.F(r_star, x) == pytest.approx(x + vf.delta, abs=1e-8)
    assert value_at(vf, r_star, x) == pytest.approx(x + vf.delta, abs=1e-8)


def test_x_linearity(vf, r_star):
    for r in (r_star - 3, r_star - 0.5, r_star + 0.5, r_star + 3):
        slope = value_x(vf, r)
        assert value_at(vf, r, 4.0) - value_at(vf, r, 1.5) == pytest.approx(2.5 * slope, rel=1e-12)
    assert value_x(vf, r_star + 1) == 1.0


def test_value_rejects_negative_capital(vf, r_star):
    with pytest.raises(ValueError):
        value_at(vf, r_star, -1.0)
    with pytest.raises(ValueError):
        hjb_residual(vf, r_star - 1, -1.0)


def test_hjb_residual_branches(vf, r_star):
    lv, slack = hjb_residual(vf, r_star - 1.0, 2.0)
    assert abs(lv) <= 1e-6 and slack < 0
    r = r_star + 1.0
    lv, slack = hjb_residual(vf, r, 2.0)
    assert lv == pytest.approx(-r * 2.0, abs=1e-6)
    assert slack == 0.0


def test_hjb_rejects_barrier(vf, r_star):
    with pytest.raises(ValueError):
        hjb_residual(vf, r_star + 5e-5, 1.0)


def test_variational_inequality(vf, r_star):
    rep = hjb_grid(vf, np.linspace(r_star - 4, r_star + 4, 41), np.linspace(0, 5, 6))
    assert np.all(rep.complementarity <= 1e-6)
    assert np.all(np.abs(rep.complementarity) <= 1e-6)
    assert np.all(rep.grad_slack <= 1e-8)


def test_smooth_pasting(vf):
    gaps = smooth_pasting_report(vf, [0.0, 1.0, 5.0]).max_gaps()
    for k in ("value_gap", "gx_gap", "fx_gap", "slope_gap", "G_r_spread"):
        assert gaps[k] <= 1e-6, k


def test_pasting_negative_control(vf):
    rep = smooth_pasting_report(vf, [0.0, 1.0, 5.0], delta=1.1 * vf.delta)
    assert rep.max_gaps()["slope_gap"] > 1e-3


def test_pasting_rejects_empty(vf):
    with pytest.raises(ValueError):
        smooth_pasting_report(vf, [])


def test_continuity_across_barrier(vf, r_star):
    eps = 1e-7
    for x in (0.0, 2.0):
        assert vf.G(r_star - eps, x) == pytest.approx(vf.F(r_star + eps, x), abs=1e-6)
        assert vf.G_r(r_star - eps, x) == pytest.approx(vf.F_r(r_star + eps, x), abs=1e-6)


def test_slope_and_lower_bound(vf, r_star):
    for r in np.linspace(r_star - 4, r_star + 4, 33):
        assert value_x(vf, r) >= 1.0 - 1e-12
        for x in (0.0, 1.0, 5.0):
            if r >= r_star:
                assert value_at(vf, r, x) >= x


def test_value_surface_csv(vf, tmp_path, r_star):
    path = write_value_surface(vf, [r_star - 1, r_star + 1], [0.0, 1.0], tmp_path / "v.csv")
    with path.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "x", "v", "branch"]
    assert [r[3] for r in rows[1:]] == ["wait", "wait", "consume", "consume"]
