"""Numba path kernels for the Monte Carlo oracle.

Paths are stepped with exact joint ``(r, dU)`` increments of size ``h_f``.
When ``sub > 1`` every quantity is also tracked on the coarse grid made of
every ``sub``-th point, so coarse (step ``sub * h_f``) and fine estimates
share the same Brownian path.
"""

import math

import numpy as np
from numba import njit

# columns of the hit kernel output
DISC_C, TIME_C, RUN_C, RHIT_C, DISC_F, TIME_F, RUN_F, RHIT_F, TRUNC, ENV = range(10)
N_COLS = 10


@njit(cache=True, nogil=True, inline="always")
def _crossed(r, r_star, up):
    if up:
        return r >= r_star
    return r <= r_star


@njit(cache=True, nogil=True, inline="always")
def _envelope(disc, t, r, r_star, kill, a, q_mean, b, st):
    # bound on what any of the three payoffs can still collect after (t, r)
    if kill >= 0.0:
        return disc * max(1.0, t + 1.0 / kill, 1.0 / kill)
    hit = disc * math.exp(-(r - r_star) / a) * (1.0 + t + 1.0 / b)
    run = disc * math.exp(max(0.0, q_mean - r) / a + st * st / (4.0 * a ** 3)) / b
    return max(hit, run)


@njit(cache=True, nogil=True)
def hit_kernel(gen, n, r0, r_star, up, n_fine, sub, h_f,
               decay, r_base, u_base, u_slope, sd_r, l21, l22,
               kill, a, q_mean, b, st, trunc_eps):
    """Discounted hitting payoffs, one row per path.

    ``kill < 0`` discounts with ``exp(-U_t)``; otherwise with ``exp(-kill t)``
    (the measure-changed estimator).  A path that has not hit is stopped
    early once its envelope drops below ``trunc_eps``; ``TRUNC`` flags paths
    that were still live at the horizon and ``ENV`` holds the envelope of
    every unfinished path.
    """
    out = np.zeros((n, N_COLS))
    h_c = h_f * sub
    for i in range(n):
        r = r0
        U = 0.0
        disc = 1.0
        prev_c = 1.0
        prev_f = 1.0
        run_c = 0.0
        run_f = 0.0
        if _crossed(r, r_star, up):
            out[i, DISC_C] = 1.0
            out[i, DISC_F] = 1.0
            out[i, RHIT_C] = r
            out[i, RHIT_F] = r
            continue
        hit_f = False
        hit_c = False
        stopped = False
        k = 0
        while k < n_fine:
            z1 = gen.standard_normal()
            z2 = gen.standard_normal()
            U += u_base + u_slope * r + l21 * z1 + l22 * z2
            r = decay * r + r_base + sd_r * z1
            k += 1
            t = k * h_f
            if kill < 0.0:
                disc = math.exp(-U)
            else:
                disc = math.exp(-kill * t)
            if not hit_f:
                run_f += 0.5 * h_f * (prev_f + disc)
                prev_f = disc
                if _crossed(r, r_star, up):
                    hit_f = True
                    out[i, DISC_F] = disc
                    out[i, TIME_F] = t * disc
                    out[i, RUN_F] = run_f
                    out[i, RHIT_F] = r
            if k % sub == 0:
                run_c += 0.5 * h_c * (prev_c + disc)
                prev_c = disc
                if _crossed(r, r_star, up):
                    hit_c = True
                    out[i, DISC_C] = disc
                    out[i, TIME_C] = t * disc
                    out[i, RUN_C] = run_c
                    out[i, RHIT_C] = r
                    break
                if trunc_eps > 0.0 and _envelope(disc, t, r, r_star, kill, a, q_mean, b, st) < trunc_eps:
                    stopped = True
                    break
        if not hit_c:
            out[i, RUN_C] = run_c
            if not hit_f:
                out[i, RUN_F] = run_f
            out[i, TRUNC] = 0.0 if stopped else 1.0
            out[i, ENV] = _envelope(disc, k * h_f, r, r_star, kill, a, q_mean, b, st)
    return out


@njit(cache=True, nogil=True)
def policy_kernel(gen, n, r0, barriers, mu, n_fine, sub, h_f,
                  decay, r_base, u_base, u_slope, sd_r, l21, l22,
                  a, tail_r_star, tail_const, tail_eps):
    """Barrier-policy payouts on a common set of paths.

    ``barriers`` must be sorted ascending.  The policy for barrier ``B``
    consumes all capital at every grid point where ``r >= B``; its payout
    value is ``x0 * A + B`` with ``A`` the discount at the first payout.
    Returns per-path ``A_c, B_c, A_f, B_f`` of shape ``(n, nb)``, the
    annuities ``int_0^T exp(-U) ds`` (trapezoid) on each grid and the tail
    envelope of each path.

    With ``tail_eps > 0`` a path stops at a coarse point once
    ``exp(-U) (1 + exp((tail_r_star - r)/a)) (mu t + tail_const)`` falls
    below ``tail_eps``.  With ``tail_const = x0 + mu/b + Delta`` that is an
    upper bound on what any admissible policy can still collect.
    """
    nb = barriers.shape[0]
    # index 0 is the coarse grid, 1 the fine grid
    A = np.zeros((2, n, nb))
    B = np.zeros((2, n, nb))
    ann = np.zeros((2, n))
    env = np.zeros(n)
    last = np.zeros((2, nb))
    paid = np.zeros((2, nb), dtype=np.bool_)
    dense = np.zeros((2, nb + 1))
    cnt = np.zeros(2, dtype=np.int64)
    prev = np.zeros(2)
    hs = np.array([h_f * sub, h_f])
    n_grids = 2 if sub > 1 else 1
    for i in range(n):
        r = r0
        U = 0.0
        c0 = 0
        while c0 < nb and barriers[c0] <= r:
            c0 += 1
        for g in range(2):
            cnt[g] = c0
            prev[g] = 1.0
            for j in range(nb):
                last[g, j] = 0.0
                paid[g, j] = j < c0
                if j < c0:
                    A[g, i, j] = 1.0
            for j in range(nb + 1):
                dense[g, j] = 0.0
        disc = 1.0
        t = 0.0
        for k in range(1, n_fine + 1):
            z1 = gen.standard_normal()
            z2 = gen.standard_normal()
            U += u_base + u_slope * r + l21 * z1 + l22 * z2
            r = decay * r + r_base + sd_r * z1
            disc = math.exp(-U)
            t = k * h_f
            on_coarse = k % sub == 0
            for g in range(n_grids):
                if g == 0 and not on_coarse:
                    continue
                h = hs[g]
                ann[g, i] += 0.5 * h * (prev[g] + disc)
                prev[g] = disc
                # Paying barriers form a prefix of length c.  Steady income
                # goes to the whole prefix through a difference array; only
                # barriers entering or leaving the prefix are visited.
                c_prev = cnt[g]
                c = c_prev
                while c < nb and barriers[c] <= r:
                    c += 1
                while c > 0 and barriers[c - 1] > r:
                    c -= 1
                if c > 0:
                    pay = disc * mu * h
                    dense[g, 0] += pay
                    dense[g, c] -= pay
                for j in range(c_prev, c):  # entering: income accrued over the gap
                    B[g, i, j] += disc * mu * (t - last[g, j] - h)
                    if not paid[g, j]:
                        A[g, i, j] = disc
                        paid[g, j] = True
                for j in range(c, c_prev):  # leaving: last payout was the previous point
                    last[g, j] = t - h
                cnt[g] = c
            if on_coarse and tail_eps > 0.0:
                if disc * (1.0 + math.exp((tail_r_star - r) / a)) * (mu * t + tail_const) < tail_eps:
                    break
        env[i] = disc * (1.0 + math.exp((tail_r_star - r) / a)) * (mu * t + tail_const)
        for g in range(n_grids):
            acc = 0.0
            for j in range(nb):
                acc += dense[g, j]
                B[g, i, j] += acc
        if sub == 1:
            ann[1, i] = ann[0, i]
            for j in range(nb):
                A[1, i, j] = A[0, i, j]
                B[1, i, j] = B[0, i, j]
    return A[0], B[0], A[1], B[1], ann[0], ann[1], env
