"""Monte Carlo oracle for the hitting functionals and barrier policies.

Everything here is simulated from exact OU transitions and shares no code
with the ODE / special-function routes apart from the model parameters.
Hitting times are detected on the simulation grid, which makes the
estimators late-biased by O(sqrt(h)); :func:`calibrate_bias` measures the
constant by running a coarse and a four times finer grid on the same paths.

Work is split into chunks of paths; chunk ``k`` draws from the Philox stream
``(seed, k)``, so results do not depend on how chunks are scheduled.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ouconsume import _kernels as K
from ouconsume.model import ModelParams
from ouconsume.ou_engine import RngStream, joint_moments

log = logging.getLogger(__name__)

DEFAULT_N = 100_000
DEFAULT_H = 1e-3
CHUNK = 8192
TRUNC_EPS = 1e-14
WEIGHTS = ("unit", "time", "running")
_WEIGHT_COLS = {"unit": (K.DISC_C, K.DISC_F), "time": (K.TIME_C, K.TIME_F), "running": (K.RUN_C, K.RUN_F)}
# functional -> (direction, weight)
FUNCTIONALS = {
    "psi1": ("up", "unit"),
    "psi2": ("up", "time"),
    "phi1": ("down", "unit"),
    "phi2": ("down", "running"),
}


class HorizonError(RuntimeError):
    """Too many paths were still running at the horizon."""


class InadmissiblePolicyError(ValueError):
    """The policy would drive capital negative or consume negatively."""


def default_horizon(params: ModelParams) -> float:
    return 40.0 / params.b


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int
    step_h: float
    horizon_T: float
    truncated_fraction: float
    bias_envelope: float = 0.0  # mean truncation bound of unfinished paths
    seed: int | None = None

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")
        if not 0.0 <= self.truncated_fraction <= 1.0:
            raise ValueError(f"truncated_fraction out of [0, 1]: {self.truncated_fraction}")

    def tolerance(self, k: float = 3.0, budget: float = 0.0) -> float:
        return k * self.stderr + budget + self.bias_envelope

    def as_dict(self) -> dict:
        return asdict(self)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    # fsum makes the reduction exact, hence independent of evaluation order
    n = x.shape[0]
    if n == 0:
        return 0.0, 0.0
    m = math.fsum(x) / n
    if n == 1:
        return m, 0.0
    var = math.fsum((x - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


def _run_chunks(fn, n: int, seed: int, chunk: int, workers: int) -> list:
    jobs = []
    sid = 0
    left = n
    while left > 0:
        size = min(chunk, left)
        jobs.append((RngStream(seed, sid), size))
        left -= size
        sid += 1
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda job: fn(job[0].generator(), job[1]), jobs))
    return [fn(s.generator(), size) for s, size in jobs]


def _check_knobs(n, h, T, sub):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if not h > 0:
        raise ValueError(f"step must be > 0, got {h}")
    if not T >= 0:
        raise ValueError(f"horizon must be >= 0, got {T}")
    if int(sub) != sub or sub < 1:
        raise ValueError(f"sub must be a positive integer, got {sub}")


def _kernel_moments(params, h_f, b_tilde=None):
    jm = joint_moments(params, h_f, b_tilde=b_tilde)
    sd_r, l21, l22 = jm.loadings()
    return jm.decay, jm.r_base, jm.u_base, jm.u_slope, sd_r, l21, l22


# ---------------------------------------------------------------- hitting

@dataclass
class HitRun:
    """Per-path hitting payoffs on a coarse grid (step ``h``) and a fine one (``h/sub``)."""

    params: ModelParams
    r0: float
    r_star: float
    direction: str
    h: float
    sub: int
    T: float
    seed: int
    data: np.ndarray = field(repr=False)
    scale: np.ndarray | None = field(default=None, repr=False)  # per-path weight (measure change)
    env_scale: float = 1.0

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def payoffs(self, weight: str, fine: bool = False) -> np.ndarray:
        if weight not in _WEIGHT_COLS:
            raise ValueError(f"weight must be one of {WEIGHTS}, got {weight!r}")
        col = _WEIGHT_COLS[weight][1 if fine else 0]
        x = self.data[:, col]
        if self.scale is not None:
            x = x * (self.scale[1] if fine else self.scale[0])
        return x

    def estimate(self, weight: str, fine: bool = False) -> MCEstimate:
        if fine and self.sub == 1:
            fine = False
        m, se = _mean_se(self.payoffs(weight, fine))
        return MCEstimate(
            mean=m,
            stderr=se,
            n_paths=self.n,
            step_h=self.h / self.sub if fine else self.h,
            horizon_T=self.T,
            truncated_fraction=float(np.mean(self.data[:, K.TRUNC])),
            bias_envelope=self.env_scale * math.fsum(self.data[:, K.ENV]) / self.n,
            seed=self.seed,
        )

    def paired_difference(self, weight: str) -> tuple[float, float]:
        """Mean and SE of coarse minus fine payoff on the same paths."""
        return _mean_se(self.payoffs(weight, False) - self.payoffs(weight, True))


def _check_side(r0, r_star, direction):
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    if direction == "up" and not r0 <= r_star:
        raise ValueError(f"upward hit needs r0 <= r_star, got r0={r0}, r_star={r_star}")
    if direction == "down" and not r0 >= r_star:
        raise ValueError(f"downward hit needs r0 >= r_star, got r0={r0}, r_star={r_star}")


def simulate_hits(params: ModelParams, r0: float, r_star: float, direction: str,
                  n: int = DEFAULT_N, h: float = DEFAULT_H, T: float | None = None,
                  seed: int = 0, sub: int = 1, chunk: int = CHUNK, workers: int = 1,
                  trunc_eps: float = TRUNC_EPS, max_truncated: float = 0.01,
                  *, q_dynamics: bool = False, exponent: float | None = None) -> HitRun:
    """Simulate first passages of ``r_star`` and record all three payoffs.

    With ``q_dynamics`` the rate follows the discount-adjusted OU (mean
    ``params.q_mean``) and payoffs are discounted at the constant rate
    ``exponent`` (default ``params.b``) instead of by ``exp(-U)``.
    """
    T = default_horizon(params) if T is None else T
    _check_knobs(n, h, T, sub)
    _check_side(r0, r_star, direction)
    n_coarse = math.ceil(T / h - 1e-9)
    h_f = h / sub
    kill = -1.0
    if q_dynamics:
        kill = params.b if exponent is None else float(exponent)
        if not kill > 0:
            raise ValueError(f"exponent must be > 0, got {kill}")
    mom = _kernel_moments(params, h_f, b_tilde=params.q_mean if q_dynamics else None)
    up = direction == "up"

    def work(gen, size):
        return K.hit_kernel(gen, size, float(r0), float(r_star), up, n_coarse * sub, sub, h_f,
                            *mom, kill, params.a, params.q_mean, params.b, params.sigma_tilde,
                            trunc_eps)

    log.info("hits seed=%s n=%s h=%s sub=%s T=%s r0=%s r*=%s dir=%s q=%s params=%s",
             seed, n, h, sub, T, r0, r_star, direction, q_dynamics, params.as_dict())
    data = np.concatenate(_run_chunks(work, int(n), seed, chunk, workers))
    run = HitRun(params, float(r0), float(r_star), direction, h, int(sub), float(T), seed, data)
    frac = float(np.mean(data[:, K.TRUNC]))
    if frac > max_truncated:
        raise HorizonError(f"{frac:.3%} of paths still running at T={T} (cap {max_truncated:.3%})")
    return run


def estimate_discounted_hit(params: ModelParams, r0: float, r_star: float, direction: str,
                            weight: str, n: int = DEFAULT_N, h: float = DEFAULT_H,
                            T: float | None = None, seed: int = 0, **kw) -> MCEstimate:
    """MC estimate of ``E[w exp(-U_tau)]`` for the first passage of ``r_star``.

    ``weight`` is ``"unit"`` (w = 1), ``"time"`` (w = tau) or ``"running"``
    (payoff ``int_0^tau exp(-U_s) ds`` instead).
    """
    if weight not in WEIGHTS:
        raise ValueError(f"weight must be one of {WEIGHTS}, got {weight!r}")
    return simulate_hits(params, r0, r_star, direction, n, h, T, seed, **kw).estimate(weight)


def estimate_functional(params: ModelParams, kind: str, r0: float, r_star: float, **kw) -> MCEstimate:
    """``psi1``, ``psi2``, ``phi1`` or ``phi2`` by direct simulation."""
    direction, weight = FUNCTIONALS[kind]
    return estimate_discounted_hit(params, r0, r_star, direction, weight, **kw)


def simulate_measure_change(params: ModelParams, r0: float, r_star: float,
                            n: int = DEFAULT_N, h: float = DEFAULT_H, T: float | None = None,
                            seed: int = 0, direction: str = "up",
                            exponent: float | None = None, **kw) -> HitRun:
    """Paths of the discount-adjusted OU, weighted back to hitting discounts.

    Under the adjusted dynamics ``exp(-U_t) = exp(-(r0 - r_t)/a - b t) Z_t``
    with ``Z`` the density process, so at any stopping time the unit payoff
    is reweighted by ``exp(-(r0 - r_tau)/a)``.  Using the rate actually
    observed at the detected hit keeps the identity exact on the grid.
    """
    run = simulate_hits(params, r0, r_star, direction, n, h, T, seed,
                        q_dynamics=True, exponent=exponent, **kw)
    a = params.a
    hit_c = run.data[:, K.DISC_C] > 0
    hit_f = run.data[:, K.DISC_F] > 0
    w_c = np.where(hit_c, np.exp(-(r0 - run.data[:, K.RHIT_C]) / a), 0.0)
    w_f = np.where(hit_f, np.exp(-(r0 - run.data[:, K.RHIT_F]) / a), 0.0)
    run.scale = (w_c, w_f)
    # the overshoot past r_star is a few grid standard deviations at most
    sd = math.sqrt(joint_moments(params, h).var_r)
    run.env_scale = math.exp((abs(r_star - r0) + 8 * sd) / a)
    return run


def estimate_via_measure_change(params: ModelParams, r0: float, r_star: float,
                                n: int = DEFAULT_N, h: float = DEFAULT_H, T: float | None = None,
                                seed: int = 0, **kw) -> MCEstimate:
    """``psi1(r0)`` as ``E_Q[exp(-(r0 - r_tau)/a - b tau)]``."""
    return simulate_measure_change(params, r0, r_star, n, h, T, seed, **kw).estimate("unit")


def q_laplace(params: ModelParams, r0: float, r_star: float, exponent: float,
              n: int = DEFAULT_N, h: float = DEFAULT_H, T: float | None = None,
              seed: int = 0, **kw) -> MCEstimate:
    """Plain ``E_Q[exp(-exponent tau)]`` under the adjusted dynamics."""
    run = simulate_hits(params, r0, r_star, "up", n, h, T, seed,
                        q_dynamics=True, exponent=exponent, **kw)
    return run.estimate("unit")


@dataclass(frozen=True)
class BiasCalibration:
    kind: str
    r0: float
    h: float
    sub: int
    diff: float  # coarse minus fine, same paths
    diff_se: float
    c_bias: float

    def budget(self, h: float | None = None) -> float:
        return self.c_bias * math.sqrt(self.h if h is None else h)


def c_bias_from_difference(diff: float, diff_se: float, h: float, sub: int) -> float:
    """Richardson constant for an ``O(sqrt(h))`` bias.

    ``E_h - E_{h/sub} = C sqrt(h) (1 - 1/sqrt(sub))``.  Two standard errors
    of the paired difference are added so sampling noise cannot shrink the
    budget below the bias it is meant to cover.
    """
    return (abs(diff) + 2.0 * diff_se) / (math.sqrt(h) * (1.0 - 1.0 / math.sqrt(sub)))


def calibrate_bias(params: ModelParams, kind: str, r0: float, r_star: float,
                   n: int = 20_000, h: float = DEFAULT_H, T: float | None = None,
                   seed: int = 0, sub: int = 4, **kw) -> BiasCalibration:
    """Estimate ``C_bias`` for one functional from an ``h`` vs ``h/sub`` run."""
    direction, weight = FUNCTIONALS[kind]
    run = simulate_hits(params, r0, r_star, direction, n, h, T, seed, sub=sub, **kw)
    d, se = run.paired_difference(weight)
    return BiasCalibration(kind, float(r0), h, sub, d, se, c_bias_from_difference(d, se, h, sub))


# ---------------------------------------------------------------- policies

_MODES = ("barrier_lump_sum", "constant_rate", "no_consumption")


@dataclass(frozen=True)
class PolicySpec:
    """A consumption rule.

    ``barrier_lump_sum``: consume all capital whenever ``r >= barrier``
    (``-inf`` consumes always).  ``constant_rate``: consume ``lump`` at time
    0, then income at rate ``rate <= mu``.  ``no_consumption``: never.
    """

    mode: str
    barrier: float = math.nan
    rate: float = 0.0
    lump: float = 0.0
    mu: float | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise InadmissiblePolicyError(f"unknown mode {self.mode!r}")
        if self.mode == "barrier_lump_sum" and (math.isnan(self.barrier) or self.barrier == math.inf):
            raise InadmissiblePolicyError(f"barrier must be a real number or -inf, got {self.barrier}")
        if self.mode == "constant_rate":
            if self.mu is None:
                raise InadmissiblePolicyError("constant_rate needs the income rate mu")
            if not 0.0 <= self.rate <= self.mu:
                raise InadmissiblePolicyError(f"rate must lie in [0, mu={self.mu}], got {self.rate}")
            if not self.lump >= 0:
                raise InadmissiblePolicyError(f"lump must be >= 0, got {self.lump}")

    @classmethod
    def barrier_lump_sum(cls, barrier: float) -> PolicySpec:
        return cls("barrier_lump_sum", barrier=float(barrier))

    @classmethod
    def constant_rate(cls, rate: float, mu: float, lump: float = 0.0) -> PolicySpec:
        return cls("constant_rate", rate=float(rate), lump=float(lump), mu=float(mu))

    @classmethod
    def no_consumption(cls) -> PolicySpec:
        return cls("no_consumption")

    def check(self, params: ModelParams, x0: float) -> None:
        if not x0 >= 0:
            raise InadmissiblePolicyError(f"initial capital must be >= 0, got {x0}")
        if self.mode == "constant_rate":
            if self.mu != params.mu:
                raise InadmissiblePolicyError(f"policy built for mu={self.mu}, model has mu={params.mu}")
            if self.lump > x0:
                raise InadmissiblePolicyError(f"lump {self.lump} exceeds capital {x0}")

    def label(self) -> str:
        if self.mode == "barrier_lump_sum":
            return f"barrier={self.barrier:g}"
        if self.mode == "constant_rate":
            return f"rate={self.rate:g},lump={self.lump:g}"
        return "none"


@dataclass
class PolicyRun:
    """Barrier policies evaluated on common paths.

    The payout of barrier ``j`` on a path is ``x0 * A[:, j] + B[:, j]``.
    """

    params: ModelParams
    r0: float
    barriers: np.ndarray
    h: float
    sub: int
    T: float
    seed: int
    A: tuple[np.ndarray, np.ndarray] = field(repr=False)  # coarse, fine
    B: tuple[np.ndarray, np.ndarray] = field(repr=False)
    annuity: tuple[np.ndarray, np.ndarray] = field(repr=False)
    env: np.ndarray = field(repr=False)  # per-path tail bound at capital x_env
    x_env: float = 0.0
    tail_eps: float = 0.0

    @property
    def n(self) -> int:
        return self.env.shape[0]

    def payouts(self, j: int, x0: float, fine: bool = False) -> np.ndarray:
        g = 1 if fine else 0
        return x0 * self.A[g][:, j] + self.B[g][:, j]

    def _truncated_fraction(self) -> float:
        if self.tail_eps > 0:
            return float(np.mean(self.env >= self.tail_eps))
        return 1.0

    def _envelope(self, x0: float) -> float:
        if x0 > self.x_env:
            raise ValueError(f"run was set up for capital <= {self.x_env}, got {x0}")
        return math.fsum(self.env) / self.n

    def _make(self, m, se, x0, fine) -> MCEstimate:
        return MCEstimate(m, se, self.n, self.h / self.sub if fine else self.h, self.T,
                          self._truncated_fraction(), self._envelope(x0), self.seed)

    def estimate(self, j: int, x0: float, fine: bool = False) -> MCEstimate:
        m, se = _mean_se(self.payouts(j, x0, fine and self.sub > 1))
        return self._make(m, se, x0, fine and self.sub > 1)

    def estimate_policy(self, policy: PolicySpec, x0: float, fine: bool = False) -> MCEstimate:
        policy.check(self.params, x0)
        fine = fine and self.sub > 1
        if policy.mode == "no_consumption":
            return MCEstimate(0.0, 0.0, self.n, self.h, self.T, 0.0, 0.0, self.seed)
        if policy.mode == "constant_rate":
            m, se = _mean_se(policy.lump + policy.rate * self.annuity[1 if fine else 0])
            return self._make(m, se, x0, fine)
        j = self.index(policy.barrier)
        return self.estimate(j, x0, fine)

    def index(self, barrier: float) -> int:
        hits = np.flatnonzero(self.barriers == barrier)
        if hits.size == 0:
            raise KeyError(f"barrier {barrier} was not simulated")
        return int(hits[0])

    def paired_difference(self, i: int, j: int, x0: float, fine: bool = False) -> tuple[float, float]:
        """Mean and SE of ``payout_i - payout_j`` on common paths."""
        return _mean_se(self.payouts(i, x0, fine) - self.payouts(j, x0, fine))

    def grid_difference(self, j: int, x0: float) -> tuple[float, float]:
        """Coarse minus fine payout for barrier ``j``."""
        return _mean_se(self.payouts(j, x0, False) - self.payouts(j, x0, True))


def truncation_bound(params: ModelParams, delta: float, t: float, r: float, x: float,
                     r_star: float) -> float:
    """Upper bound on ``E[exp(-U_t) v(r_t, x + mu t)]`` from state ``(r, x)``.

    Uses ``v(r, x) <= (1 + exp(-(r - r*)/a)) (x + mu/b + Delta)`` and the
    exact Laplace transforms of ``U_t`` and ``U_t + r_t/a``.
    """
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t}")
    a, st, m, b, mu = params.a, params.sigma_tilde, params.q_mean, params.b, params.mu
    bond = math.exp(-(r - m) * (-math.expm1(-a * t)) / a + st * st * (-math.expm1(-2 * a * t)) / (4 * a**3))
    tilt = math.exp((r_star - r) / a)
    return math.exp(-b * t) * (bond + tilt) * (x + mu * t + mu / b + delta)


def _tail_constants(params: ModelParams, r_star_ref, delta):
    if r_star_ref is None or delta is None:
        from ouconsume.value import build_value_function  # only for the tail envelope

        vf = build_value_function(params)
        r_star_ref = vf.r_star if r_star_ref is None else r_star_ref
        delta = vf.delta if delta is None else delta
    return float(r_star_ref), float(delta)


def simulate_policies(params: ModelParams, r0: float, barriers, n: int = DEFAULT_N,
                      h: float = DEFAULT_H, T: float | None = None, seed: int = 0,
                      sub: int = 1, x_max: float = 0.0, chunk: int = CHUNK, workers: int = 1,
                      tail_eps: float = TRUNC_EPS, r_star_ref: float | None = None,
                      delta: float | None = None) -> PolicyRun:
    """Run every barrier in ``barriers`` on the same paths.

    Paths stop early once the tail bound (valid for any admissible policy
    and capital up to ``x_max``) drops below ``tail_eps``; that bound needs
    the optimal barrier and gluing constant, which are computed when not
    supplied.
    """
    T = default_horizon(params) if T is None else T
    _check_knobs(n, h, T, sub)
    bars = np.asarray(barriers, dtype=float).ravel()
    if np.any(np.isnan(bars)) or np.any(bars == np.inf):
        raise ValueError("barriers must be real numbers or -inf")
    order = np.argsort(bars, kind="stable")
    sorted_bars = np.ascontiguousarray(bars[order])
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    rs, dl = _tail_constants(params, r_star_ref, delta)
    tail_const = x_max + params.mu / params.b + dl
    n_coarse = math.ceil(T / h - 1e-9)
    h_f = h / sub
    mom = _kernel_moments(params, h_f)

    def work(gen, size):
        return K.policy_kernel(gen, size, float(r0), sorted_bars, params.mu, n_coarse * sub, sub, h_f,
                               *mom, params.a, rs, tail_const, tail_eps)

    log.info("policies seed=%s n=%s h=%s sub=%s T=%s r0=%s barriers=%s params=%s",
             seed, n, h, sub, T, r0, bars.tolist(), params.as_dict())
    parts = _run_chunks(work, int(n), seed, chunk, workers)
    cat = [np.concatenate([p[k] for p in parts]) for k in range(7)]
    A_c, B_c, A_f, B_f = (m[:, inverse] for m in cat[:4])
    return PolicyRun(params, float(r0), bars, h, int(sub), float(T), seed,
                     (A_c, A_f), (B_c, B_f), (cat[4], cat[5]), cat[6], float(x_max), tail_eps)


def evaluate_barrier_policy(params: ModelParams, r0: float, x0: float, policy: PolicySpec,
                            n: int = DEFAULT_N, h: float = DEFAULT_H, T: float | None = None,
                            seed: int = 0, **kw) -> MCEstimate:
    """MC value ``E[int_0^T exp(-U_s) dC_s]`` of one policy."""
    policy.check(params, x0)
    T = default_horizon(params) if T is None else T
    if policy.mode == "no_consumption":
        _check_knobs(n, h, T, 1)
        return MCEstimate(0.0, 0.0, int(n), h, T, 0.0, 0.0, seed)
    bars = [policy.barrier] if policy.mode == "barrier_lump_sum" else []
    run = simulate_policies(params, r0, bars, n, h, T, seed, x_max=x0, **kw)
    return run.estimate_policy(policy, x0)


@dataclass(frozen=True)
class ScanRow:
    barrier: float
    estimate: MCEstimate
    diff_to_best: float  # value minus the best value, same paths
    diff_se: float


@dataclass(frozen=True)
class ScanResult:
    r0: float
    x0: float
    rows: tuple[ScanRow, ...]
    best: float

    def within_resolution(self, k: float = 3.0) -> list[float]:
        """Barriers whose paired gap to the argmax is inside ``k`` SE."""
        return [row.barrier for row in self.rows if -row.diff_to_best <= k * row.diff_se]

    def to_csv(self, path, header_comment: str | None = None) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh)
            w.writerow(["barrier", "value", "stderr", "diff_to_best", "diff_se", "truncated_fraction",
                        "bias_envelope"])
            for row in self.rows:
                e = row.estimate
                w.writerow([repr(row.barrier), repr(e.mean), repr(e.stderr), repr(row.diff_to_best),
                            repr(row.diff_se), repr(e.truncated_fraction), repr(e.bias_envelope)])
        return path


def optimality_scan(params: ModelParams, r0: float, x0: float, barrier_grid,
                    n: int = DEFAULT_N, h: float = DEFAULT_H, T: float | None = None,
                    seed: int = 0, **kw) -> ScanResult:
    """Policy value for each barrier on common random numbers, plus the argmax."""
    grid = [float(b) for b in barrier_grid]
    if not grid:
        raise ValueError("barrier_grid must be non-empty")
    if not x0 >= 0:
        raise InadmissiblePolicyError(f"initial capital must be >= 0, got {x0}")
    run = simulate_policies(params, r0, grid, n, h, T, seed, x_max=x0, **kw)
    ests = [run.estimate(j, x0) for j in range(len(grid))]
    jbest = int(np.argmax([e.mean for e in ests]))
    rows = []
    for j, b in enumerate(grid):
        d, se = run.paired_difference(j, jbest, x0) if j != jbest else (0.0, 0.0)
        rows.append(ScanRow(b, ests[j], d, se))
    return ScanResult(float(r0), float(x0), tuple(rows), grid[jbest])
