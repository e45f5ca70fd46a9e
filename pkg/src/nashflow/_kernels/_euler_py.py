"""Pure-numpy twin of the compiled affine-Euler stepping kernel.

Same contract as ``_euler_cy.run_affine_euler``: projected explicit Euler for
an affine gradient field G(x) = J x + b, blockwise projections onto
whole-space / box / ball / simplex sets, trapezoid time-averaging at full
step rate, residual checks and state records at a fixed stride.
"""

from __future__ import annotations

import numpy as np

KIND_WHOLE = 0
KIND_BOX = 1
KIND_BALL = 2
KIND_SIMPLEX = 3

REASON_TMAX = 0
REASON_CONVERGED = 1


def _project_inplace(x, kinds, offsets, box_lo, box_hi, ball_c, ball_r, scales):
    for j in range(kinds.size):
        a, b = offsets[j], offsets[j + 1]
        kind = kinds[j]
        if kind == KIND_WHOLE:
            continue
        v = x[a:b]
        if kind == KIND_BOX:
            np.clip(v, box_lo[a:b], box_hi[a:b], out=v)
        elif kind == KIND_BALL:
            d = v - ball_c[a:b]
            nrm = np.sqrt(d @ d)
            if nrm > ball_r[j]:
                v[:] = ball_c[a:b] + d * (ball_r[j] / nrm)
        else:  # simplex
            u = np.sort(v)[::-1]
            css = np.cumsum(u) - scales[j]
            ks = np.arange(1, v.size + 1)
            k = np.nonzero(u - css / ks > 0)[0][-1]
            tau = css[k] / (k + 1.0)
            np.maximum(v - tau, 0.0, out=v)
    return x


def run_affine_euler(
    jmat,
    bvec,
    x0,
    h,
    n_full,
    h_last,
    t_end,
    kinds,
    offsets,
    box_lo,
    box_hi,
    ball_c,
    ball_r,
    scales,
    stride,
    gamma,
    resid_tol,
):
    n = x0.size
    n_total = n_full + (1 if h_last > 0.0 else 0)
    max_rec = n_total // stride + 3
    times = np.zeros(max_rec)
    steps = np.zeros(max_rec, dtype=np.int64)
    states = np.zeros((max_rec, n))
    residuals = np.zeros(max_rec)

    def residual(x):
        y = x - gamma * (jmat @ x + bvec)
        _project_inplace(y, kinds, offsets, box_lo, box_hi, ball_c, ball_r, scales)
        return float(np.linalg.norm(x - y))

    x = x0.astype(float).copy()
    cesaro_sum = np.zeros(n)
    m = 0

    def record(k, t):
        nonlocal m
        times[m] = t
        steps[m] = k
        states[m] = x
        residuals[m] = residual(x)
        m += 1
        return residuals[m - 1] <= resid_tol

    if record(0, 0.0):
        return (times[:m].copy(), steps[:m].copy(), states[:m].copy(),
                residuals[:m].copy(), x.copy(), REASON_CONVERGED, 0)

    reason = REASON_TMAX
    k_done = 0
    t_elapsed = 0.0
    for k in range(1, n_total + 1):
        hk = h if k <= n_full else h_last
        g = jmat @ x + bvec
        xn = x - hk * g
        _project_inplace(xn, kinds, offsets, box_lo, box_hi, ball_c, ball_r, scales)
        cesaro_sum += (0.5 * hk) * (x + xn)
        x = xn
        k_done = k
        t_elapsed = k * h if k <= n_full else t_end
        if k % stride == 0 or k == n_total:
            if record(k, t_elapsed):
                reason = REASON_CONVERGED
                break

    cesaro = cesaro_sum / t_elapsed if t_elapsed > 0 else x0.astype(float).copy()
    return (times[:m].copy(), steps[:m].copy(), states[:m].copy(),
            residuals[:m].copy(), cesaro, reason, k_done)
