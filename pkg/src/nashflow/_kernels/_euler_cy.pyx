# cython: language_level=3
"""Compiled stepping kernel: projected explicit Euler for affine fields.

Contract mirrors ``_euler_py.run_affine_euler`` exactly; see that module for
parameter semantics.
"""

import numpy as np

from libc.math cimport sqrt
from libc.stdlib cimport qsort


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*> a)[0]
    cdef double y = (<const double*> b)[0]
    if x < y:
        return 1
    if x > y:
        return -1
    return 0


cdef void _project_profile(double* x, int nblocks, const int* kinds,
                           const int* offsets, const double* lo,
                           const double* hi, const double* c, const double* r,
                           const double* scales, double* buf) noexcept nogil:
    cdef int j, a, b, size, i, kind
    cdef double acc, nrm, run, css, tau, scale
    for j in range(nblocks):
        a = offsets[j]
        b = offsets[j + 1]
        size = b - a
        kind = kinds[j]
        if kind == 0:
            continue
        if kind == 1:  # box
            for i in range(a, b):
                if x[i] < lo[i]:
                    x[i] = lo[i]
                elif x[i] > hi[i]:
                    x[i] = hi[i]
        elif kind == 2:  # ball
            acc = 0.0
            for i in range(size):
                buf[i] = x[a + i] - c[a + i]
                acc += buf[i] * buf[i]
            nrm = sqrt(acc)
            if nrm > r[j]:
                for i in range(size):
                    x[a + i] = c[a + i] + buf[i] * (r[j] / nrm)
        else:  # simplex
            scale = scales[j]
            for i in range(size):
                buf[i] = x[a + i]
            qsort(buf, size, sizeof(double), _cmp_desc)
            run = 0.0
            tau = 0.0
            for i in range(size):
                run += buf[i]
                css = run - scale
                if buf[i] - css / (i + 1.0) > 0.0:
                    tau = css / (i + 1.0)
            for i in range(a, b):
                x[i] = x[i] - tau
                if x[i] < 0.0:
                    x[i] = 0.0


cdef double _residual(const double* jm, const double* bv, const double* x,
                      double* y, int nblocks, const int* kinds,
                      const int* offsets, const double* lo, const double* hi,
                      const double* c, const double* r, const double* scales,
                      double* buf, double gamma, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, q
    cdef double acc, s
    for i in range(n):
        acc = bv[i]
        for q in range(n):
            acc += jm[i * n + q] * x[q]
        y[i] = x[i] - gamma * acc
    _project_profile(y, nblocks, kinds, offsets, lo, hi, c, r, scales, buf)
    s = 0.0
    for i in range(n):
        acc = x[i] - y[i]
        s += acc * acc
    return sqrt(s)


def run_affine_euler(double[:, ::1] jmat, double[::1] bvec, double[::1] x0,
                     double h, long long n_full, double h_last, double t_end,
                     int[::1] kinds, int[::1] offsets,
                     double[::1] box_lo, double[::1] box_hi,
                     double[::1] ball_c, double[::1] ball_r,
                     double[::1] scales,
                     long long stride, double gamma, double resid_tol):
    cdef Py_ssize_t n = x0.shape[0]
    cdef int nblocks = <int> kinds.shape[0]
    cdef long long n_total = n_full + (1 if h_last > 0.0 else 0)
    cdef long long max_rec = n_total // stride + 3

    times_np = np.zeros(max_rec)
    steps_np = np.zeros(max_rec, dtype=np.int64)
    states_np = np.zeros((max_rec, n))
    resid_np = np.zeros(max_rec)
    x_np = np.asarray(x0, dtype=np.float64).copy()
    g_np = np.zeros(n)
    xn_np = np.zeros(n)
    y_np = np.zeros(n)
    s_np = np.zeros(n)

    cdef int bmax = 1
    cdef int j
    for j in range(nblocks):
        if offsets[j + 1] - offsets[j] > bmax:
            bmax = offsets[j + 1] - offsets[j]
    buf_np = np.zeros(bmax)

    cdef double[::1] times = times_np
    cdef long long[::1] steps = steps_np
    cdef double[:, ::1] states = states_np
    cdef double[::1] resid = resid_np
    cdef double[::1] x = x_np
    cdef double[::1] g = g_np
    cdef double[::1] xn = xn_np
    cdef double[::1] y = y_np
    cdef double[::1] s = s_np
    cdef double[::1] buf = buf_np

    cdef const double* jm = &jmat[0, 0]
    cdef const double* bv = &bvec[0]
    cdef const int* kp = &kinds[0]
    cdef const int* op = &offsets[0]
    cdef const double* lo = &box_lo[0]
    cdef const double* hi = &box_hi[0]
    cdef const double* bc = &ball_c[0]
    cdef const double* br = &ball_r[0]
    cdef const double* sc = &scales[0]

    cdef long long k, m = 0, k_done = 0
    cdef double t_elapsed = 0.0, hk, r, acc
    cdef int reason = 0
    cdef Py_ssize_t i, q

    with nogil:
        r = _residual(jm, bv, &x[0], &y[0], nblocks, kp, op, lo, hi, bc, br,
                      sc, &buf[0], gamma, n)
        times[0] = 0.0
        steps[0] = 0
        resid[0] = r
        for i in range(n):
            states[0, i] = x[i]
        m = 1
        if r <= resid_tol:
            reason = 1
        else:
            for k in range(1, n_total + 1):
                hk = h if k <= n_full else h_last
                for i in range(n):
                    acc = bv[i]
                    for q in range(n):
                        acc += jm[i * n + q] * x[q]
                    g[i] = acc
                for i in range(n):
                    xn[i] = x[i] - hk * g[i]
                _project_profile(&xn[0], nblocks, kp, op, lo, hi, bc, br, sc,
                                 &buf[0])
                for i in range(n):
                    s[i] += 0.5 * hk * (x[i] + xn[i])
                    x[i] = xn[i]
                k_done = k
                t_elapsed = k * h if k <= n_full else t_end
                if k % stride == 0 or k == n_total:
                    r = _residual(jm, bv, &x[0], &y[0], nblocks, kp, op, lo,
                                  hi, bc, br, sc, &buf[0], gamma, n)
                    times[m] = t_elapsed
                    steps[m] = k
                    resid[m] = r
                    for i in range(n):
                        states[m, i] = x[i]
                    m += 1
                    if r <= resid_tol:
                        reason = 1
                        break

    if reason == 1 and k_done == 0:
        return (times_np[:m].copy(), steps_np[:m].copy(), states_np[:m].copy(),
                resid_np[:m].copy(), x_np.copy(), 1, 0)
    cesaro = s_np / t_elapsed if t_elapsed > 0 else np.asarray(x0, dtype=np.float64).copy()
    return (times_np[:m].copy(), steps_np[:m].copy(), states_np[:m].copy(),
            resid_np[:m].copy(), cesaro, reason, k_done)
