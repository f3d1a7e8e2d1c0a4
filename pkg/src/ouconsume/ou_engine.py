"""Exact simulation of the OU short rate and its time integral.

Over a step of length ``h`` the pair ``(r_h, U_h = int_0^h r ds)`` is jointly
Gaussian, so paths built from joint increments have exact marginals on the
grid regardless of the step size.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ouconsume.model import ModelParams


@dataclass(frozen=True)
class RngStream:
    """Seed plus stream id; the same pair always yields the same draws."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def _integrated_variance_factor(x: float) -> float:
    """``x - 2(1 - e^-x) + (1 - e^-2x)/2``, stable for small ``x``."""
    if x < 1e-2:
        return x**3 * (1 / 3 - x / 4 + 7 * x**2 / 60 - x**3 / 24 + 31 * x**4 / 2520)
    return x + 2.0 * math.expm1(-x) - 0.5 * math.expm1(-2.0 * x)


@dataclass(frozen=True)
class JointMoments:
    """Moments of ``(r_h, U_h)`` given ``r_0``.

    ``mean_r`` and ``mean_u`` are affine in ``r_0``: ``mean = base + slope * r_0``.
    """

    h: float
    decay: float  # e^{-ah}
    r_base: float
    u_base: float
    u_slope: float
    var_r: float
    var_u: float
    cov: float

    def mean_r(self, r0):
        return self.decay * r0 + self.r_base

    def mean_u(self, r0):
        return self.u_base + self.u_slope * r0

    def loadings(self) -> tuple[float, float, float]:
        """Cholesky factors ``(sd_r, u_on_z1, u_on_z2)``."""
        sd_r = math.sqrt(self.var_r)
        if sd_r == 0.0:
            return 0.0, 0.0, 0.0
        l21 = self.cov / sd_r
        cond = max(self.var_u - l21 * l21, 0.0)
        return sd_r, l21, math.sqrt(cond)


def joint_moments(params: ModelParams, h: float, b_tilde: float | None = None) -> JointMoments:
    """Transition moments over a step ``h``.

    ``b_tilde`` overrides the long-term mean, which is how the
    discount-adjusted dynamics are simulated.
    """
    if not h > 0:
        raise ValueError(f"step must be > 0, got {h}")
    a, st = params.a, params.sigma_tilde
    bt = params.b_tilde if b_tilde is None else b_tilde
    one_minus = -math.expm1(-a * h)
    one_minus_2 = -math.expm1(-2 * a * h)
    return JointMoments(
        h=h,
        decay=1.0 - one_minus,
        r_base=bt * one_minus,
        u_base=bt * h - bt * one_minus / a,
        u_slope=one_minus / a,
        var_r=st**2 * one_minus_2 / (2 * a),
        var_u=st**2 / a**3 * _integrated_variance_factor(a * h),
        cov=st**2 / (2 * a**2) * one_minus**2,
    )


def transition_sample(params: ModelParams, r: float, h: float, rng, size=None):
    """Draw ``r_h`` from the exact Gaussian transition."""
    m = joint_moments(params, h)
    gen = _as_generator(rng)
    z = gen.standard_normal(size)
    return m.mean_r(r) + math.sqrt(m.var_r) * z


def joint_increment_sample(params: ModelParams, r: float, h: float, rng, size=None):
    """Draw ``(r_next, dU)`` jointly; returns a pair of floats or arrays."""
    m = joint_moments(params, h)
    gen = _as_generator(rng)
    sd_r, l21, l22 = m.loadings()
    shape = (2,) if size is None else (2,) + tuple(np.atleast_1d(size))
    z = gen.standard_normal(shape)
    r_next = m.mean_r(r) + sd_r * z[0]
    du = m.mean_u(r) + l21 * z[0] + l22 * z[1]
    if size is None:
        return float(r_next), float(du)
    return r_next, du


@dataclass(frozen=True)
class PathGrid:
    """One simulated path: times, rates and integrated rates."""

    t: np.ndarray
    r: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        if not (len(self.t) == len(self.r) == len(self.U)):
            raise ValueError("t, r, U must have equal lengths")
        if len(self.t) and (self.t[0] != 0.0 or self.U[0] != 0.0):
            raise ValueError("paths start at t=0 with U=0")

    def to_csv(self, path, header_comment: str | None = None) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["t", "r", "U"])
            for row in zip(self.t, self.r, self.U):
                w.writerow([repr(float(v)) for v in row])
        return path


def simulate_path(params: ModelParams, r0: float, T: float, h: float, rng) -> PathGrid:
    """Simulate ``ceil(T/h) + 1`` grid points; the last step is shortened to end at ``T``.

    ``T = 0`` gives the single starting row.
    """
    if not h > 0:
        raise ValueError(f"step must be > 0, got {h}")
    if not T >= 0:
        raise ValueError(f"horizon must be >= 0, got {T}")
    if T == 0:
        return PathGrid(t=np.zeros(1), r=np.array([float(r0)]), U=np.zeros(1))
    if h > T:
        raise ValueError(f"step {h} exceeds horizon {T}")
    n = math.ceil(T / h - 1e-12)
    t = np.minimum(np.arange(n + 1) * h, T)
    t[-1] = T
    gen = _as_generator(rng)
    z = gen.standard_normal((n, 2))
    r = np.empty(n + 1)
    U = np.empty(n + 1)
    r[0] = r0
    U[0] = 0.0
    full = joint_moments(params, h)
    last = joint_moments(params, t[-1] - t[-2]) if n >= 1 else full
    for k in range(n):
        m = last if (k == n - 1 and last.h != h) else full
        sd_r, l21, l22 = m.loadings()
        r[k + 1] = m.mean_r(r[k]) + sd_r * z[k, 0]
        U[k + 1] = U[k] + m.mean_u(r[k]) + l21 * z[k, 0] + l22 * z[k, 1]
    return PathGrid(t=t, r=r, U=U)


def sample_discount_via_identity(params: ModelParams, r0: float, T: float, rng, size: int) -> np.ndarray:
    """Draw ``U_T`` through ``U_T = (r_0 - r_T)/a + b_tilde T + (sigma_tilde/a) W_T``.

    ``(r_T, W_T)`` is sampled jointly from its Gaussian law, so this does not
    share any code path with the joint-increment stepper.
    """
    a, st, bt = params.a, params.sigma_tilde, params.b_tilde
    e = math.exp(-a * T)
    var_x = (1 - e * e) / (2 * a)  # Var of int_0^T e^{-a(T-u)} dW_u
    cov_xw = (1 - e) / a
    gen = _as_generator(rng)
    z = gen.standard_normal((2, size))
    w = math.sqrt(T) * z[0]
    x_cond_sd = math.sqrt(max(var_x - cov_xw**2 / T, 0.0))
    x = cov_xw / T * w + x_cond_sd * z[1]
    r_T = r0 * e + bt * (1 - e) + st * x
    return (r0 - r_T) / a + bt * T + st / a * w


def discount_bond(params: ModelParams, r0: float, T: float) -> float:
    """Exact ``E[exp(-U_T)]`` from the Gaussian law of ``U_T``."""
    m = joint_moments(params, T)
    return math.exp(-m.mean_u(r0) + 0.5 * m.var_u)
