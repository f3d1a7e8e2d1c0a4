"""Hitting-time functionals psi1, psi2, phi1, phi2 and the optimal barrier.

For a barrier ``r*`` and hitting times ``tau`` (from below) and ``rho`` (from
above):

    psi1(r) = E[exp(-U_tau)]              r <= r*
    psi2(r) = E[tau exp(-U_tau)]          r <= r*
    phi1(r) = E[exp(-U_rho)]              r >= r*
    phi2(r) = E[int_0^rho exp(-U_s) ds]   r >= r*

Two independent routes are provided: closed forms built on scaled parabolic
cylinder functions, and boundary-value solves of the Feynman-Kac ODEs
``s(r) + a(b_tilde - r) f' + (sigma_tilde^2/2) f'' - r f = 0`` with source
``s`` equal to 0 (psi1, phi1), 1 (phi2) or psi1 (psi2).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np
from scipy.integrate import solve_bvp
from scipy.optimize import brentq

from ouconsume.model import ModelParams
from ouconsume.special_fn import h_ratio, pcf_dtilde, pcf_dtilde_mp

KINDS = ("psi1", "psi2", "phi1", "phi2")
# Target printed alongside the example parameters; see solve_barrier.
EXAMPLE_PRINTED_TARGET = 1.0 / (2.0 * math.sqrt(2.0))


class BarrierError(RuntimeError):
    """No sign change of ``H - target`` inside the scan range."""


class ODESolveError(RuntimeError):
    """The boundary-value solver did not converge."""


class SlowConvergenceError(ArithmeticError):
    """A truncated series did not reach the requested tolerance."""


# ---------------------------------------------------------------- barrier


@dataclass(frozen=True)
class BarrierSolution:
    r_star: float
    target: float
    residual: float
    bracket: tuple[float, float]
    iterations: int
    centre: float

    def as_dict(self) -> dict:
        return {
            "r_star": self.r_star,
            "target": self.target,
            "residual": self.residual,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
            "centre": self.centre,
        }


def solve_barrier(
    params: ModelParams,
    tol: float = 1e-12,
    target: float | None = None,
    centre: float | None = None,
    max_expansions: int = 60,
) -> BarrierSolution:
    """Root of ``h_ratio(params, y, centre) = target``.

    The default target ``sigma/b`` with the default centre is the barrier at
    which ``psi1'(r*) = 0``.  ``h_ratio`` is increasing, so the bracket
    starts at ``[0, b]`` and each end is pushed outwards geometrically until
    the sign changes.
    """
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    tgt = params.sigma / params.b if target is None else float(target)
    c = params.q_mean if centre is None else float(centre)

    def g(y):
        return h_ratio(params, y, c) - tgt

    lo, hi = 0.0, max(params.b, 1.0)
    width = hi - lo
    for _ in range(max_expansions):
        if g(lo) < 0:
            break
        lo -= width
        width *= 2
    else:
        raise BarrierError(f"no lower bracket for target {tgt}")
    width = hi - lo
    for _ in range(max_expansions):
        if g(hi) > 0:
            break
        hi += width
        width *= 2
    else:
        raise BarrierError(f"no upper bracket for target {tgt}")

    root, info = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                        maxiter=500, full_output=True)
    res = g(root)
    if abs(res) > tol:
        raise BarrierError(f"root residual {res:.3e} exceeds tol {tol:.1e}")
    return BarrierSolution(root, tgt, res, (lo, hi), info.iterations, c)


def barrier_candidates(params: ModelParams, tol: float = 1e-12) -> dict[str, BarrierSolution]:
    """Roots for both targets (``sigma/b`` and the printed ``1/(2 sqrt 2)``).

    Each target is solved with the ratio centred on the discount-adjusted
    mean (the barrier where ``psi1'`` vanishes) and, for comparison, centred
    on ``b``.
    """
    out = {}
    for tname, tgt in (("sigma/b", params.sigma / params.b), ("printed", EXAMPLE_PRINTED_TARGET)):
        out[tname] = solve_barrier(params, tol, target=tgt)
        out[f"{tname}@b"] = solve_barrier(params, tol, target=tgt, centre=params.b)
    return out


# ---------------------------------------------------------- closed forms


def _laplace_ratio(params: ModelParams, order: float, r: float, r_star: float, sign: float) -> float:
    # E_Q[exp(-order*a*T)] for the hitting time T of r* under the
    # discount-adjusted OU; sign=+1 from below, -1 from above.
    m, s = params.q_mean, params.sigma
    return pcf_dtilde(order, sign * (m - r) / s) / pcf_dtilde(order, sign * (m - r_star) / s)


def psi1_closed(params: ModelParams, r_star: float, r: float) -> float:
    """``exp(-(r - r*)/a) * D~_v((m - r)/sigma) / D~_v((m - r*)/sigma)`` for ``r <= r*``."""
    if r > r_star:
        raise ValueError(f"psi1 is defined for r <= r*, got r={r} > {r_star}")
    return math.exp(-(r - r_star) / params.a) * _laplace_ratio(params, params.order, r, r_star, 1.0)


def phi1_closed(params: ModelParams, r_star: float, r: float) -> float:
    """``exp(-(r - r*)/a) * D~_v((r - m)/sigma) / D~_v((r* - m)/sigma)`` for ``r >= r*``."""
    if r < r_star:
        raise ValueError(f"phi1 is defined for r >= r*, got r={r} < {r_star}")
    return math.exp(-(r - r_star) / params.a) * _laplace_ratio(params, params.order, r, r_star, -1.0)


def psi1_closed_derivative(params: ModelParams, r_star: float, r: float) -> float:
    """Derivative of :func:`psi1_closed` via ``d/dy D~_v(y) = -v D~_{v+1}(y)``."""
    v, s = params.order, params.sigma
    y = (params.q_mean - r) / s
    return psi1_closed(params, r_star, r) * (-1.0 / params.a + v / s * pcf_dtilde(v + 1, y) / pcf_dtilde(v, y))


def phi1_closed_derivative(params: ModelParams, r_star: float, r: float) -> float:
    v, s = params.order, params.sigma
    y = (r - params.q_mean) / s
    return phi1_closed(params, r_star, r) * (-1.0 / params.a - v / s * pcf_dtilde(v + 1, y) / pcf_dtilde(v, y))


@dataclass(frozen=True)
class SeriesResult:
    value: float
    partial_sum: float
    remainder: float
    last_term: float
    n_terms: int


def psi2_series(
    params: ModelParams,
    r_star: float,
    r: float,
    n_max: int = 60,
    tol: float | None = None,
    accelerate: bool = True,
    dps: int = 60,
) -> SeriesResult:
    """Double-series evaluation of ``psi2(r)`` truncated at ``n_max``.

    ``tau exp(-b tau) = (1/b) sum_n (1/n) sum_k C(n,k) (-1)^k exp(-b(k+1) tau)``
    and each ``E_Q[exp(-b(k+1) tau)]`` is a ratio of scaled parabolic
    cylinder functions of order ``b(k+1)/a``.  The inner alternating sums
    cancel to about ``2^-n`` of their terms, so they are formed in ``dps``
    digits.  The outer terms decay only algebraically; with ``accelerate``
    the partial sums are passed through a Levin u-transform, whose error
    estimate is reported as ``remainder``.

    Raises:
        SlowConvergenceError: when ``tol`` is given and the remainder exceeds it.
    """
    if r > r_star:
        raise ValueError(f"psi2 is defined for r <= r*, got r={r} > {r_star}")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if r == r_star:
        return SeriesResult(0.0, 0.0, 0.0, 0.0, n_max)
    with mpmath.workdps(dps):
        a, b, s, m = (mpmath.mpf(x) for x in (params.a, params.b, params.sigma, params.q_mean))
        R, Rs = mpmath.mpf(r), mpmath.mpf(r_star)
        y, ys = (m - R) / s, (m - Rs) / s
        lap = [
            pcf_dtilde_mp(b * (k + 1) / a, y, dps) / pcf_dtilde_mp(b * (k + 1) / a, ys, dps)
            for k in range(n_max + 1)
        ]
        terms = []
        for n in range(1, n_max + 1):
            inner = mpmath.fsum(mpmath.binomial(n, k) * (-1) ** k * lap[k] for k in range(n + 1))
            terms.append(inner / n)
        partial = []
        acc = mpmath.mpf(0)
        for t in terms:
            acc += t
            partial.append(acc)
        pref = mpmath.exp(-(R - Rs) / a) / b
        raw = pref * partial[-1]
        last = abs(pref * terms[-1])
        if accelerate and n_max >= 4:
            est = mpmath.levin(method="levin", variant="u").update_psum(partial)[0]
            prev = mpmath.levin(method="levin", variant="u").update_psum(partial[:-1])[0]
            value = pref * est
            remainder = abs(pref * (est - prev))
        else:
            value = raw
            # terms are positive and decreasing: the tail exceeds the last term
            remainder = last * n_max
        out = SeriesResult(float(value), float(raw), float(remainder), float(last), n_max)
    if tol is not None and out.remainder > tol:
        raise SlowConvergenceError(
            f"psi2 series remainder {out.remainder:.2e} > tol {tol:.1e} at n_max={n_max}"
        )
    return out


# ------------------------------------------------------------ ODE route


def default_domain_pad(params: ModelParams) -> float:
    return max(10.0, 8.0 * params.sigma + abs(params.b))


@dataclass
class FunctionalCurve:
    """A functional on its truncated half-line, with C^1 data from the BVP solution.

    Attributes:
        kind: one of ``psi1, psi2, phi1, phi2``.
        r_star: the barrier; ``psi`` curves live left of it, ``phi`` right.
        lo, hi: truncated domain.
        nodes: final collocation mesh.
        max_node_residual: largest ODE residual over mesh nodes and midpoints.
    """

    kind: str
    r_star: float
    lo: float
    hi: float
    params: ModelParams
    _sol: object = field(repr=False)
    _source: object = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    max_node_residual: float = 0.0

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        slack = 1e-12 * max(1.0, abs(self.r_star))
        if np.any(r < self.lo - slack) or np.any(r > self.hi + slack):
            raise ValueError(f"{self.kind} evaluated outside [{self.lo}, {self.hi}]")
        return np.clip(r, self.lo, self.hi)

    def value(self, r):
        r = self._check(r)
        out = self._sol(r)[0]
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, r):
        r = self._check(r)
        out = self._sol(r)[1]
        return float(out) if np.ndim(out) == 0 else out

    __call__ = value

    def second_derivative(self, r, step: float | None = None):
        """Central difference of the derivative state (one-sided at the ends)."""
        r = np.asarray(self._check(r), dtype=float)
        d = 1e-4 * self.params.sigma if step is None else step
        up = np.minimum(r + d, self.hi)
        dn = np.maximum(r - d, self.lo)
        out = (self._sol(up)[1] - self._sol(dn)[1]) / (up - dn)
        return float(out) if np.ndim(out) == 0 else out

    def barrier_derivative(self) -> float:
        return float(self._sol(np.array([self.r_star]))[1][0])

    def ode_residual(self, r):
        """``s + a(b_tilde - r) f' + (st^2/2) f'' - r f`` using the spline's own ``f''``."""
        r = np.asarray(self._check(r), dtype=float)
        p = self.params
        y = self._sol(r)
        ypp = self._sol(r, 1)[1]
        return self._source(r) + p.a * (p.b_tilde - r) * y[1] + 0.5 * p.sigma_tilde**2 * ypp - r * y[0]

    def to_csv(self, path, n: int = 401) -> Path:
        path = Path(path)
        grid = np.linspace(self.lo, self.hi, n)
        vals = self._sol(grid)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "value", "derivative"])
            for r, f, df in zip(grid, vals[0], vals[1]):
                w.writerow([repr(float(r)), repr(float(f)), repr(float(df))])
        return path


def solve_functional_ode(
    params: ModelParams,
    kind: str,
    r_star: float,
    domain_pad: float | None = None,
    psi1: FunctionalCurve | None = None,
    tol: float = 1e-10,
    max_nodes: int = 200_000,
) -> FunctionalCurve:
    """Solve the Feynman-Kac boundary-value problem for one functional.

    Boundary values at ``r*`` are ``1`` for psi1/phi1 and ``0`` for
    psi2/phi2.  At the truncated right end (phi curves) the solution is set
    to zero.  Left of ``r*`` the psi curves grow like ``exp(-r/a) |r|^(-b/a)``
    as ``r -> -inf``, so the far condition fixes that log-derivative,
    ``f'/f = -1/a + (b/a)/(b_tilde - r)``; the competing solution grows like
    ``exp(a r^2 / sigma_tilde^2)`` and any mismatch decays quickly into the
    interior.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    pad = default_domain_pad(params) if domain_pad is None else float(domain_pad)
    if not pad > 0:
        raise ValueError(f"domain_pad must be > 0, got {pad}")
    a, bt, st, b = params.a, params.b_tilde, params.sigma_tilde, params.b
    left = kind.startswith("psi")
    lo, hi = (r_star - pad, r_star) if left else (r_star, r_star + pad)

    if kind == "psi2":
        if psi1 is None:
            raise ValueError("psi2 needs a solved psi1 curve as its source term")
        if psi1.kind != "psi1" or psi1.r_star != r_star or psi1.lo > lo:
            raise ValueError("psi1 source curve is inconsistent with the psi2 domain")
        src_curve = psi1

        def source(r):
            return src_curve._sol(np.asarray(r, dtype=float))[0]
    elif kind == "phi2":
        def source(r):
            return np.ones_like(np.asarray(r, dtype=float))
    else:
        def source(r):
            return np.zeros_like(np.asarray(r, dtype=float))

    k2 = 2.0 / st**2

    def rhs(r, Y):
        return np.vstack([Y[1], k2 * (r * Y[0] - a * (bt - r) * Y[1] - source(r))])

    at_barrier = 1.0 if kind in ("psi1", "phi1") else 0.0
    if left:
        gap = bt - lo
        kappa = -1.0 / a + (b / a) / gap if gap > 1.0 else None

        def bc(ya, yb):
            far = ya[1] - kappa * ya[0] if kappa is not None else ya[0]
            return np.array([far, yb[0] - at_barrier])
    else:
        def bc(ya, yb):
            return np.array([ya[0] - at_barrier, yb[0]])

    x = np.linspace(lo, hi, 400)
    guess = np.zeros((2, x.size))
    shape = np.exp(-(x - r_star) / a)
    if kind in ("psi1", "phi1"):
        guess[0] = shape if left else shape
        guess[1] = -shape / a
    sol = solve_bvp(rhs, bc, x, guess, tol=tol, max_nodes=max_nodes, bc_tol=tol)
    if sol.status != 0:
        raise ODESolveError(f"{kind}: {sol.message}")

    nodes = sol.x
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    curve = FunctionalCurve(kind, r_star, lo, hi, params, sol.sol, source, nodes)
    probe = np.concatenate([nodes, mids])
    curve.max_node_residual = float(np.max(np.abs(curve.ode_residual(probe))))
    return curve


def derivative_at_barrier(curve: FunctionalCurve) -> float:
    """One-sided derivative at ``r*`` taken from the solution's derivative state."""
    return curve.barrier_derivative()


def build_curves(params: ModelParams, r_star: float, domain_pad: float | None = None,
                 tol: float = 1e-10) -> dict[str, FunctionalCurve]:
    """All four curves at one barrier; psi2 is sourced from the solved psi1."""
    psi1 = solve_functional_ode(params, "psi1", r_star, domain_pad, tol=tol)
    return {
        "psi1": psi1,
        "psi2": solve_functional_ode(params, "psi2", r_star, domain_pad, psi1=psi1, tol=tol),
        "phi1": solve_functional_ode(params, "phi1", r_star, domain_pad, tol=tol),
        "phi2": solve_functional_ode(params, "phi2", r_star, domain_pad, tol=tol),
    }
