import math

import mpmath
import numpy as np
import pytest
from scipy.special import erfc, erfcx

from ouconsume.functionals import solve_barrier
from ouconsume.special_fn import h_ratio, h_ratio_log_derivative, log_gamma, pcf_dtilde

# exp(1/2) sqrt(pi/2) erfc(1/sqrt 2), from scipy's erfc
DTILDE_1_AT_1 = 0.6556795424187986


@pytest.mark.parametrize("x, expected", [(1.0, 0.0), (0.5, 0.5723649429247001), (5.0, math.log(24.0))])
def test_log_gamma(x, expected):
    assert log_gamma(x) == pytest.approx(expected, rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_log_gamma_rejects(x):
    with pytest.raises(ValueError):
        log_gamma(x)


def test_order_zero_is_one():
    for y in np.linspace(-10, 10, 201):
        assert abs(pcf_dtilde(0.0, y) - 1.0) <= 1e-12


def test_order_one_at_zero():
    assert pcf_dtilde(1.0, 0.0) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-12)


def test_order_one_at_one():
    oracle = math.exp(0.5) * math.sqrt(math.pi / 2) * erfc(1 / math.sqrt(2))
    assert oracle == pytest.approx(DTILDE_1_AT_1, rel=1e-15)
    assert pcf_dtilde(1.0, 1.0) == pytest.approx(oracle, rel=1e-10)


def test_erfc_identity_grid():
    for y in np.linspace(-5, 5, 101):
        # e^{y^2/2} erfc(y/sqrt2) = erfcx(y/sqrt2)
        ref = math.sqrt(math.pi / 2) * erfcx(y / math.sqrt(2))
        assert pcf_dtilde(1.0, y) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("v", [0.5, 2.0, 3.0, 7.5, 20.0])
@pytest.mark.parametrize("y", [-10.0, -6.0, -1.0, 0.0, 1.5, 4.0, 8.5, 10.0])
def test_against_mpmath(v, y):
    with mpmath.workdps(40):
        ref = float(mpmath.exp(mpmath.mpf(y) ** 2 / 4) * mpmath.pcfd(-v, y))
    got = pcf_dtilde(v, y)
    assert got > 0
    assert got == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("v, y", [(-0.1, 0.0), (float("nan"), 0.0), (1.0, float("inf"))])
def test_pcf_rejects(v, y):
    with pytest.raises(ValueError):
        pcf_dtilde(v, y)


def test_h_at_root_is_target(params):
    sol = solve_barrier(params)
    assert h_ratio(params, sol.r_star) == pytest.approx(params.sigma / params.b, abs=1e-12)


def test_h_at_zero_below_target(params):
    assert h_ratio(params, 0.0) < params.sigma / params.b
    assert h_ratio(params, 0.0, centre=params.b) < params.sigma / params.b


def test_h_increasing_convex(params):
    ys = np.linspace(-8, 8, 321)
    H = np.array([h_ratio(params, y) for y in ys])
    assert np.all(H > 0)
    assert np.all(np.diff(H) > 0)
    assert np.all(np.diff(H, 2) >= -1e-8)


def test_riccati_by_finite_difference(params):
    p = params
    st2 = p.sigma_tilde**2 / 2
    rs = solve_barrier(p).r_star
    step = 1e-5
    for y in np.linspace(rs - 4, rs + 4, 33):
        k = h_ratio_log_derivative(p, y)
        dk = (h_ratio_log_derivative(p, y + step) - h_ratio_log_derivative(p, y - step)) / (2 * step)
        rhs = p.b - p.a * (p.q_mean - y) * k - st2 * k * k
        assert st2 * dk == pytest.approx(rhs, rel=1e-5, abs=1e-9)
