"""The piecewise value function and its HJB / smooth-pasting diagnostics.

Below the barrier the value is ``G(r, x) = (x + Delta) psi1(r) + mu psi2(r)``:
nothing is consumed until the rate first reaches ``r*``.  Above it the value
is ``F(r, x) = x + mu phi2(r) + Delta phi1(r)``, where all capital goes at
once and income is consumed as it arrives until the rate falls back to the
barrier.  ``Delta = G(r*, 0)`` glues the two so that the r-derivatives match
at ``r*``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ouconsume.functionals import FunctionalCurve, build_curves, solve_barrier
from ouconsume.model import ModelParams

RESIDUAL_BAND = 1e-4


class DeltaError(ArithmeticError):
    """The gluing constant is not positive and finite."""


def delta_const(curves: dict[str, FunctionalCurve], params: ModelParams) -> float:
    """``mu (psi2'(r*) - phi2'(r*)) / phi1'(r*)``."""
    stars = {c.r_star for c in curves.values()}
    if len(stars) != 1:
        raise ValueError(f"curves built at different barriers: {sorted(stars)}")
    d_psi2 = curves["psi2"].barrier_derivative()
    d_phi2 = curves["phi2"].barrier_derivative()
    d_phi1 = curves["phi1"].barrier_derivative()
    delta = params.mu * (d_psi2 - d_phi2) / d_phi1
    if not (np.isfinite(delta) and delta > 0):
        raise DeltaError(f"Delta = {delta} (psi2'={d_psi2}, phi2'={d_phi2}, phi1'={d_phi1})")
    return float(delta)


@dataclass
class ValueFunction:
    params: ModelParams
    r_star: float
    delta: float
    curves: dict[str, FunctionalCurve] = field(repr=False)

    @property
    def lo(self) -> float:
        return self.curves["psi1"].lo

    @property
    def hi(self) -> float:
        return self.curves["phi1"].hi

    def _parts(self, r: float, x: float):
        # (v, v_x, v_r, v_rr) on the branch that owns r
        p, c = self.params, self.curves
        if r <= self.r_star:
            p1, p2 = c["psi1"], c["psi2"]
            v = (x + self.delta) * p1.value(r) + p.mu * p2.value(r)
            vx = p1.value(r)
            vr = (x + self.delta) * p1.derivative(r) + p.mu * p2.derivative(r)
            vrr = (x + self.delta) * p1.second_derivative(r) + p.mu * p2.second_derivative(r)
        else:
            f1, f2 = c["phi1"], c["phi2"]
            v = x + p.mu * f2.value(r) + self.delta * f1.value(r)
            vx = 1.0
            vr = p.mu * f2.derivative(r) + self.delta * f1.derivative(r)
            vrr = p.mu * f2.second_derivative(r) + self.delta * f1.second_derivative(r)
        return v, vx, vr, vrr

    def branch(self, r: float) -> str:
        return "consume" if r >= self.r_star else "wait"

    def G(self, r: float, x: float) -> float:
        c = self.curves
        return (x + self.delta) * c["psi1"].value(r) + self.params.mu * c["psi2"].value(r)

    def F(self, r: float, x: float) -> float:
        c = self.curves
        return x + self.params.mu * c["phi2"].value(r) + self.delta * c["phi1"].value(r)

    def G_r(self, r: float, x: float) -> float:
        c = self.curves
        return (x + self.delta) * c["psi1"].derivative(r) + self.params.mu * c["psi2"].derivative(r)

    def F_r(self, r: float, x: float) -> float:
        c = self.curves
        return self.params.mu * c["phi2"].derivative(r) + self.delta * c["phi1"].derivative(r)


def build_value_function(params: ModelParams, r_star: float | None = None,
                         domain_pad: float | None = None, tol: float = 1e-10) -> ValueFunction:
    """Solve the barrier (unless given), build the four curves and Delta."""
    if r_star is None:
        r_star = solve_barrier(params).r_star
    curves = build_curves(params, r_star, domain_pad, tol=tol)
    return ValueFunction(params, r_star, delta_const(curves, params), curves)


def value_at(vf: ValueFunction, r: float, x: float) -> float:
    """``G(r, x)`` for ``r <= r*``, ``F(r, x)`` otherwise."""
    if not x >= 0:
        raise ValueError(f"capital must be >= 0, got {x}")
    return vf.G(r, x) if r <= vf.r_star else vf.F(r, x)


def value_x(vf: ValueFunction, r: float) -> float:
    """``v_x``: ``psi1(r)`` while waiting, 1 in the consumption region."""
    return vf.curves["psi1"].value(r) if r <= vf.r_star else 1.0


def hjb_residual(vf: ValueFunction, r: float, x: float) -> tuple[float, float]:
    """Return ``(L(v)(r, x), 1 - v_x(r, x))``.

    ``L(f) = mu f_x + a(b_tilde - r) f_r + (sigma_tilde^2/2) f_rr - r f``.
    ``v_rr`` jumps at ``r*``, so points within ``1e-4`` of it are rejected.
    """
    if not x >= 0:
        raise ValueError(f"capital must be >= 0, got {x}")
    if abs(r - vf.r_star) < RESIDUAL_BAND:
        raise ValueError(f"r={r} is within {RESIDUAL_BAND} of the barrier {vf.r_star}")
    p = vf.params
    v, vx, vr, vrr = vf._parts(r, x)
    lv = p.mu * vx + p.a * (p.b_tilde - r) * vr + 0.5 * p.sigma_tilde**2 * vrr - r * v
    return float(lv), float(1.0 - vx)


@dataclass(frozen=True)
class PastingRow:
    x: float
    value_gap: float  # |G - F|
    gx_gap: float  # |G_x - 1|
    fx_gap: float  # |F_x - 1|
    slope_gap: float  # |G_r - F_r|
    G_r: float
    value: float


@dataclass(frozen=True)
class PastingReport:
    r_star: float
    delta: float
    rows: tuple[PastingRow, ...]
    G_r_spread: float

    def max_gaps(self) -> dict:
        return {
            "value_gap": max(r.value_gap for r in self.rows),
            "gx_gap": max(r.gx_gap for r in self.rows),
            "fx_gap": max(r.fx_gap for r in self.rows),
            "slope_gap": max(r.slope_gap for r in self.rows),
            "G_r_spread": self.G_r_spread,
        }


def smooth_pasting_report(vf: ValueFunction, x_grid, delta: float | None = None) -> PastingReport:
    """Value and first-derivative matching of ``G`` and ``F`` at ``r*``.

    ``delta`` overrides the gluing constant (used for negative controls).
    """
    xs = [float(x) for x in x_grid]
    if not xs or min(xs) < 0:
        raise ValueError("x_grid must be non-empty and non-negative")
    d = vf.delta if delta is None else float(delta)
    trial = ValueFunction(vf.params, vf.r_star, d, vf.curves)
    rs = vf.r_star
    rows = []
    for x in xs:
        g, f = trial.G(rs, x), trial.F(rs, x)
        gr, fr = trial.G_r(rs, x), trial.F_r(rs, x)
        rows.append(PastingRow(
            x=x,
            value_gap=abs(g - f),
            gx_gap=abs(vf.curves["psi1"].value(rs) - 1.0),
            fx_gap=0.0,  # F_x = 1 identically
            slope_gap=abs(gr - fr),
            G_r=gr,
            value=g,
        ))
    spread = max(r.G_r for r in rows) - min(r.G_r for r in rows)
    return PastingReport(rs, d, tuple(rows), spread)


@dataclass(frozen=True)
class HjbReport:
    r: np.ndarray
    x: np.ndarray
    lv: np.ndarray  # L(v) at each (r, x)
    grad_slack: np.ndarray  # 1 - v_x
    hjb: np.ndarray  # max{L(v), 1 - v_x}
    complementarity: np.ndarray  # max{L(v) + r x 1[r > r*], 1 - v_x}

    def summary(self, r_star: float) -> dict:
        left = self.r < r_star
        right = ~left
        xr = self.x * self.r
        return {
            "max_abs_LG_left": float(np.max(np.abs(self.lv[left]), initial=0.0)),
            "max_abs_LF_plus_rx_right": float(np.max(np.abs(self.lv[right] + xr[right]), initial=0.0)),
            "max_grad_slack": float(np.max(self.grad_slack)),
            "max_abs_complementarity": float(np.max(np.abs(self.complementarity))),
            "max_hjb": float(np.max(self.hjb)),
        }


def hjb_grid(vf: ValueFunction, r_values, x_values) -> HjbReport:
    """Evaluate :func:`hjb_residual` on a tensor grid, skipping the band around ``r*``."""
    rr, xx, lv, gs = [], [], [], []
    for r in r_values:
        if abs(r - vf.r_star) < RESIDUAL_BAND:
            continue
        for x in x_values:
            a, b = hjb_residual(vf, float(r), float(x))
            rr.append(r)
            xx.append(x)
            lv.append(a)
            gs.append(b)
    r_arr, x_arr = np.array(rr, float), np.array(xx, float)
    lv_arr, gs_arr = np.array(lv), np.array(gs)
    shift = np.where(r_arr > vf.r_star, r_arr * x_arr, 0.0)
    return HjbReport(
        r=r_arr,
        x=x_arr,
        lv=lv_arr,
        grad_slack=gs_arr,
        hjb=np.maximum(lv_arr, gs_arr),
        complementarity=np.maximum(lv_arr + shift, gs_arr),
    )


def write_value_surface(vf: ValueFunction, r_values, x_values, path) -> Path:
    """CSV with columns ``r, x, v, branch``; ``branch`` is ``consume`` when ``r >= r*``."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "x", "v", "branch"])
        for r in r_values:
            for x in x_values:
                w.writerow([repr(float(r)), repr(float(x)), repr(value_at(vf, float(r), float(x))),
                            vf.branch(float(r))])
    return path
