"""Scaled parabolic cylinder functions and the barrier ratio H.

``pcf_dtilde(v, y)`` returns ``exp(y**2 / 4) * D_{-v}(y)`` for real ``v >= 0``.
Three evaluation regimes are used:

* ``y <= 0``: the confluent power series.  Every term is non-negative here,
  so plain compensated summation in double precision is accurate.
* ``y > 0`` and the large-argument expansion reaches machine precision
  before diverging: that expansion.
* otherwise: the same power series in extended precision.  For ``y > 0``
  the two series branches cancel; the digits lost are bounded by
  ``log10(pcf_dtilde(v, -y) / pcf_dtilde(v, y))``, which sizes the working
  precision.
"""

from __future__ import annotations

import math

import mpmath

from ouconsume.model import ModelParams

_SQRT_PI = math.sqrt(math.pi)
_MAX_TERMS = 20000
_ASYMPTOTIC_EPS = 1e-17


class ConvergenceError(ArithmeticError):
    """A series or expansion failed to reach the requested accuracy."""


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    if not x > 0:
        raise ValueError(f"log_gamma needs x > 0, got {x}")
    return math.lgamma(x)


def _series_double(v: float, y: float) -> float:
    y2 = y * y
    even = [1.0]
    odd = [1.0]
    te = to = 1.0
    run_e = run_o = 1.0
    for k in range(1, _MAX_TERMS):
        te *= (v + 2 * k - 2) * y2 / ((2 * k - 1) * (2 * k))
        to *= (v + 2 * k - 1) * y2 / ((2 * k) * (2 * k + 1))
        even.append(te)
        odd.append(to)
        run_e += te
        run_o += to
        # past the peak the term ratio is < 1/2, so the tail is below the last term
        if k > 2 and te < 1e-17 * run_e and to < 1e-17 * run_o:
            break
    else:
        raise ConvergenceError(f"power series did not converge for v={v}, y={y}")
    se = math.fsum(even)
    so = math.fsum(odd)
    log_pref = -0.5 * v * math.log(2.0)
    first = math.exp(log_pref - math.lgamma((v + 1) / 2)) * _SQRT_PI * se
    if v == 0:
        return first
    # y <= 0 so both contributions are non-negative
    second = math.exp(log_pref - math.lgamma(v / 2)) * _SQRT_PI * math.sqrt(2.0) * (-y) * so
    return first + second


def _series_mp(v: float, y: float, dps: int) -> float:
    with mpmath.workdps(dps):
        V = mpmath.mpf(v)
        Y = mpmath.mpf(y)
        y2 = Y * Y
        se = so = mpmath.mpf(1)
        te = to = mpmath.mpf(1)
        eps = mpmath.mpf(10) ** (-dps)
        for k in range(1, _MAX_TERMS):
            te *= (V + 2 * k - 2) * y2 / ((2 * k - 1) * (2 * k))
            to *= (V + 2 * k - 1) * y2 / ((2 * k) * (2 * k + 1))
            se += te
            so += to
            if k > 2 and te < eps * se and to < eps * so:
                break
        else:
            raise ConvergenceError(f"extended series did not converge for v={v}, y={y}")
        pref = mpmath.power(2, -V / 2) * mpmath.sqrt(mpmath.pi)
        out = pref * (se * mpmath.rgamma((V + 1) / 2) - Y * mpmath.sqrt(2) * so * mpmath.rgamma(V / 2))
        return float(out)


def _asymptotic(v: float, y: float) -> float | None:
    """Large-``y`` expansion, or ``None`` if it cannot reach full accuracy."""
    z = 1.0 / (2.0 * y * y)
    total = 1.0
    term = 1.0
    for k in range(1, 200):
        nxt = -term * (v + 2 * k - 2) * (v + 2 * k - 1) * z / k
        if abs(nxt) > abs(term):
            return None
        term = nxt
        total += term
        if abs(term) < _ASYMPTOTIC_EPS * abs(total):
            return total * math.exp(-v * math.log(y))
    return None


def pcf_dtilde(v: float, y: float) -> float:
    """Scaled parabolic cylinder function ``exp(y^2/4) D_{-v}(y)``.

    Args:
        v: order, ``v >= 0``.
        y: real argument.

    Raises:
        ValueError: for negative or non-finite order, or non-finite ``y``.
        ConvergenceError: if no regime reaches the target accuracy.
    """
    if not (math.isfinite(v) and v >= 0):
        raise ValueError(f"order must be finite and >= 0, got {v}")
    if not math.isfinite(y):
        raise ValueError(f"argument must be finite, got {y}")
    if v == 0:
        return 1.0
    if y <= 0:
        return _series_double(v, y)
    if y > 2.0:
        val = _asymptotic(v, y)
        if val is not None:
            return val
    # Digits lost to cancellation: log10 of (sum of |terms|) / result.
    mag_terms = math.log10(_series_double(v, -y))
    mag_result = -v * math.log10(y + 2.0 * math.sqrt(v + 1.0)) - 1.0
    dps = int(25 + max(0.0, mag_terms - mag_result))
    return _series_mp(v, y, dps)


def pcf_dtilde_mp(v, y, dps: int = 50):
    """High-precision ``exp(y^2/4) D_{-v}(y)`` via mpmath's own ``pcfd``.

    This is an independent implementation used by the double-series route
    for the time-weighted functional and by tests.
    """
    with mpmath.workdps(dps):
        Y = mpmath.mpf(y)
        return mpmath.exp(Y * Y / 4) * mpmath.pcfd(-mpmath.mpf(v), Y)


def h_ratio(params: ModelParams, y: float, centre: float | None = None) -> float:
    """Ratio ``D~_{v+1}(u) / D~_v(u)`` with ``v = b/a`` and ``u = (centre - y)/sigma``.

    With the default centre (the discount-adjusted mean ``params.q_mean``)
    the root of ``h_ratio(y) = sigma/b`` is the barrier where the hitting
    functional has zero slope.  Passing ``centre=params.b`` gives the ratio
    centred on the effective discount rate instead.
    """
    c = params.q_mean if centre is None else centre
    u = (c - y) / params.sigma
    v = params.order
    return pcf_dtilde(v + 1.0, u) / pcf_dtilde(v, u)


def h_ratio_log_derivative(params: ModelParams, y: float, centre: float | None = None) -> float:
    """``h'(y)/h(y)`` where ``h(y) = D~_v((centre - y)/sigma)``.

    Equal to ``b/(a sigma) * h_ratio``; this is the quantity that obeys the
    Riccati equation ``(st^2/2) k' = b - a(centre - y) k - (st^2/2) k^2``.
    """
    return params.b / (params.a * params.sigma) * h_ratio(params, y, centre)
