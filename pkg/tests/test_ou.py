import math

import numpy as np
import pytest

from ouconsume.model import unchecked_params
from ouconsume.ou_engine import (
    PathGrid,
    RngStream,
    discount_bond,
    joint_increment_sample,
    joint_moments,
    sample_discount_via_identity,
    simulate_path,
    transition_sample,
)


def euler_oracle(p, r0, h, n_paths, n_sub, seed):
    """Brute-force Euler scheme for (r_h, U_h) with step h/n_sub."""
    gen = np.random.default_rng(seed)
    dt = h / n_sub
    r = np.full(n_paths, float(r0))
    U = np.zeros(n_paths)
    sq = p.sigma_tilde * math.sqrt(dt)
    for _ in range(n_sub):
        r_new = r + p.a * (p.b_tilde - r) * dt + sq * gen.standard_normal(n_paths)
        U += 0.5 * (r + r_new) * dt
        r = r_new
    return r, U


def within(sample, expected, k=4.0):
    se = sample.std(ddof=1) / math.sqrt(sample.size)
    return abs(sample.mean() - expected) <= k * se


def test_deterministic_limit():
    p = unchecked_params(1.0, 0.0, 4.0)
    r, h = 1.5, 0.7
    e = math.exp(-h)
    assert transition_sample(p, r, h, RngStream(1)) == pytest.approx(r * e + 4 * (1 - e), abs=1e-15)
    r_next, du = joint_increment_sample(p, r, h, RngStream(1))
    assert r_next == pytest.approx(r * e + 4 * (1 - e), abs=1e-15)
    assert du == pytest.approx(4 * h + (r - 4) * (1 - e), abs=1e-15)


def test_transition_mean(params):
    x = transition_sample(params, 0.0, 1.0, RngStream(11), size=1_000_000)
    assert within(x, 4 * (1 - math.exp(-1)))


def test_stationary_limit(params):
    x = transition_sample(params, -3.0, 60.0, RngStream(12), size=200_000)
    assert within(x, params.b_tilde)
    var_target = params.sigma_tilde**2 / (2 * params.a)
    se_var = var_target * math.sqrt(2 / x.size)
    assert abs(x.var() - var_target) <= 4 * se_var


def test_moment_formulas_match_euler(params):
    r0, h = 5.0, 0.5
    m = joint_moments(params, h)
    r, U = euler_oracle(params, r0, h, 20_000, 10_000, seed=3)
    assert within(r, m.mean_r(r0))
    assert within(U, m.mean_u(r0))
    assert within((r - m.mean_r(r0)) ** 2, m.var_r)
    assert within((U - m.mean_u(r0)) ** 2, m.var_u)
    assert within((r - m.mean_r(r0)) * (U - m.mean_u(r0)), m.cov)


def test_joint_sampler_matches_formulas(params):
    r0, h = 5.0, 0.5
    m = joint_moments(params, h)
    r, U = joint_increment_sample(params, r0, h, RngStream(4), size=400_000)
    assert within(r, m.mean_r(r0))
    assert within(U, m.mean_u(r0))
    assert within((r - m.mean_r(r0)) ** 2, m.var_r)
    assert within((U - m.mean_u(r0)) ** 2, m.var_u)
    assert within((r - m.mean_r(r0)) * (U - m.mean_u(r0)), m.cov)


def test_small_step_integrand(params):
    h = 1e-4
    _, du = joint_increment_sample(params, 2.5, h, RngStream(5), size=100_000)
    assert within(du / h, 2.5 + 0.5 * params.a * (params.b_tilde - 2.5) * h)
    assert abs(np.mean(du / h) - 2.5) < 1e-3


def test_n_steps_equal_one_shot(params):
    n, h, steps = 200_000, 0.1, 10
    r = np.full(n, -1.0)
    gen = RngStream(6).generator()
    for _ in range(steps):
        r = transition_sample(params, r, h, gen, size=n)
    m = joint_moments(params, h * steps)
    assert within(r, m.mean_r(-1.0))
    assert within((r - m.mean_r(-1.0)) ** 2, m.var_r)


def test_path_grid_shape(params):
    g = simulate_path(params, 0.0, 1.0, 0.3, RngStream(7))
    assert len(g.t) == math.ceil(1.0 / 0.3) + 1
    assert g.t[0] == 0.0 and g.U[0] == 0.0 and g.t[-1] == 1.0
    assert np.all(np.diff(g.t) > 0)
    two = simulate_path(params, 0.0, 0.25, 0.25, RngStream(7))
    assert len(two.t) == 2


def test_zero_horizon_single_row(params):
    g = simulate_path(params, 1.0, 0.0, 0.1, RngStream(0))
    assert len(g.t) == 1 and g.r[0] == 1.0


@pytest.mark.parametrize("T, h", [(1.0, 0.0), (1.0, -0.1), (-1.0, 0.1), (0.1, 0.2)])
def test_path_rejects(params, T, h):
    with pytest.raises(ValueError):
        simulate_path(params, 0.0, T, h, RngStream(0))


def test_path_grid_invariants():
    with pytest.raises(ValueError):
        PathGrid(np.zeros(2), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        PathGrid(np.array([0.1]), np.zeros(1), np.zeros(1))


def test_determinism(params):
    a = simulate_path(params, 0.3, 2.0, 0.01, RngStream(99, 4))
    b = simulate_path(params, 0.3, 2.0, 0.01, RngStream(99, 4))
    c = simulate_path(params, 0.3, 2.0, 0.01, RngStream(99, 5))
    assert np.array_equal(a.r, b.r) and np.array_equal(a.U, b.U)
    assert not np.array_equal(a.r, c.r)


def test_rejects_bad_rng(params):
    with pytest.raises(TypeError):
        transition_sample(params, 0.0, 1.0, 42)


def test_discount_two_estimators(params):
    n, T, steps, r0 = 100_000, 1.0, 10, 1.0
    h = T / steps
    gen = RngStream(8).generator()
    r = np.full(n, r0)
    U = np.zeros(n)
    for _ in range(steps):
        r, du = joint_increment_sample(params, r, h, gen, size=n)
        U += du
    stepped = np.exp(-U)
    ident = np.exp(-sample_discount_via_identity(params, r0, T, RngStream(9), n))
    se = math.sqrt(stepped.var() / n + ident.var() / n)
    assert abs(stepped.mean() - ident.mean()) <= 4 * se
    exact = discount_bond(params, r0, T)
    assert within(stepped, exact)
    assert within(ident, exact)


def test_integral_monotone_on_positive_paths(params):
    kept = 0
    for i in range(200):
        g = simulate_path(params, 5.0, 2.0, 0.01, RngStream(21, i))
        if g.r.min() > 0:
            kept += 1
            assert np.all(np.diff(g.U) >= 0)
    assert kept > 100
