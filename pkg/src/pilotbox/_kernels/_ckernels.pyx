# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Crank-Nicolson sweeps and the RK4 particle ensemble.

Mirrors ``_fallback`` exactly in signature and floating-point operation
order for the RK4 kernel; the Crank-Nicolson sweep uses the Thomas
algorithm instead of LAPACK's pivoted LU.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport isfinite, fabs, fmax, ceil, NAN

cnp.import_array()

cdef enum:
    STATUS_OK = 0
    STATUS_WALL = 1
    STATUS_MASKED = 2
    STATUS_NONFINITE = 3


def cn_run(psi_in, double complex diag_lhs, double complex off_lhs,
           double complex diag_rhs, double complex off_rhs, store_steps_in):
    cdef double complex[::1] psi = np.array(psi_in, dtype=np.complex128)
    cdef cnp.int64_t[::1] store_steps = np.ascontiguousarray(store_steps_in, dtype=np.int64)
    cdef Py_ssize_t n = psi.shape[0]
    cdef Py_ssize_t nstore = store_steps.shape[0]
    frames_arr = np.empty((nstore, n), dtype=np.complex128)
    cdef double complex[:, ::1] frames = frames_arr
    cdef double complex[::1] cprime = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] inv_den = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] work = np.empty(n, dtype=np.complex128)
    cdef Py_ssize_t i, j = 0
    cdef cnp.int64_t step, n_steps = store_steps[nstore - 1]
    cdef double complex den, prev, cur, nxt
    cdef bint finite

    den = diag_lhs
    for i in range(n):
        if i > 0:
            den = diag_lhs - off_lhs * cprime[i - 1]
        if den == 0:
            return frames_arr, 0
        inv_den[i] = 1.0 / den
        cprime[i] = off_lhs * inv_den[i]

    if store_steps[0] == 0:
        frames[0, :] = psi
        j = 1
    with nogil:
        for step in range(1, n_steps + 1):
            # forward sweep with the right-hand side built on the fly
            prev = 0
            cur = psi[0]
            for i in range(n):
                nxt = psi[i + 1] if i + 1 < n else 0
                work[i] = diag_rhs * cur + off_rhs * (prev + nxt)
                if i > 0:
                    work[i] = (work[i] - off_lhs * work[i - 1]) * inv_den[i]
                else:
                    work[i] = work[i] * inv_den[i]
                prev = cur
                cur = nxt
            psi[n - 1] = work[n - 1]
            for i in range(n - 2, -1, -1):
                psi[i] = work[i] - cprime[i] * psi[i + 1]
            if step == store_steps[j]:
                finite = True
                for i in range(n):
                    if not (isfinite(psi[i].real) and isfinite(psi[i].imag)):
                        finite = False
                        break
                if not finite:
                    with gil:
                        return frames_arr, step
                for i in range(n):
                    frames[j, i] = psi[i]
                j += 1
    return frames_arr, -1


cdef inline Py_ssize_t _cell(double s, Py_ssize_t last_cell) noexcept nogil:
    if s >= last_cell:
        return last_cell
    if s < 0 or s != s:
        return 0
    return <Py_ssize_t>s


cdef inline Py_ssize_t _frame(double t, const double[::1] times, double* w) noexcept nogil:
    # same result as numpy.searchsorted(times, t, side="right") - 1, clipped
    cdef Py_ssize_t lo = 0, hi = times.shape[0], mid, k
    cdef Py_ssize_t last_frame = times.shape[0] - 2
    cdef double ww
    while lo < hi:
        mid = (lo + hi) >> 1
        if t < times[mid]:
            hi = mid
        else:
            lo = mid + 1
    k = lo - 1
    if k > last_frame:
        k = last_frame
    if k < 0:
        k = 0
    ww = (t - times[k]) / (times[k + 1] - times[k])
    if ww > 1.0:
        ww = 1.0
    if ww < 0.0:
        ww = 0.0
    w[0] = ww
    return k


cdef inline double _interp(double x, Py_ssize_t k, double w, const double[:, ::1] vtab,
                           double inv_dx, Py_ssize_t last_cell) noexcept nogil:
    cdef double s = x * inv_dx
    cdef Py_ssize_t i = _cell(s, last_cell)
    cdef double f = s - i
    cdef double va = (1.0 - f) * vtab[k, i] + f * vtab[k, i + 1]
    cdef double vb = (1.0 - f) * vtab[k + 1, i] + f * vtab[k + 1, i + 1]
    return (1.0 - w) * va + w * vb


cdef inline double _strain(double x, Py_ssize_t k, const double[:, ::1] vtab,
                           double inv_dx, Py_ssize_t last_cell) noexcept nogil:
    cdef Py_ssize_t i
    cdef double ga, gb
    if not isfinite(x):
        return 0.0
    i = _cell(x * inv_dx, last_cell)
    ga = fabs(vtab[k, i + 1] - vtab[k, i])
    gb = fabs(vtab[k + 1, i + 1] - vtab[k + 1, i])
    return (ga if ga >= gb else gb) * inv_dx


cdef struct Stages:
    Py_ssize_t k0, k1, k2
    double w0, w1, w2


cdef inline void _stages(double t, double h, const double[::1] times, Stages* st) noexcept nogil:
    st.k0 = _frame(t, times, &st.w0)
    st.k1 = _frame(t + 0.5 * h, times, &st.w1)
    st.k2 = _frame(t + h, times, &st.w2)


cdef inline double _rk4(double x, double h, Stages* st,
                        const double[:, ::1] vtab, double inv_dx, Py_ssize_t last_cell,
                        double* gmax) noexcept nogil:
    cdef double half = 0.5 * h
    cdef double a, b, c, d, xb, xc, xd, xn, g
    cdef Py_ssize_t k0 = st.k0, k1 = st.k1, k2 = st.k2
    cdef double w0 = st.w0, w1 = st.w1, w2 = st.w2
    a = _interp(x, k0, w0, vtab, inv_dx, last_cell)
    xb = x + half * a
    b = _interp(xb, k1, w1, vtab, inv_dx, last_cell)
    xc = x + half * b
    c = _interp(xc, k1, w1, vtab, inv_dx, last_cell)
    xd = x + h * c
    d = _interp(xd, k2, w2, vtab, inv_dx, last_cell)
    xn = x + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
    if gmax != NULL:
        g = _strain(x, k0, vtab, inv_dx, last_cell)
        g = fmax(g, _strain(xb, k1, vtab, inv_dx, last_cell))
        g = fmax(g, _strain(xc, k1, vtab, inv_dx, last_cell))
        g = fmax(g, _strain(xd, k2, vtab, inv_dx, last_cell))
        g = fmax(g, _strain(xn, k2, vtab, inv_dx, last_cell))
        gmax[0] = g
    return xn


cdef double _advance(double x, double t, double h, Stages* full, const double[::1] times,
                     const double[:, ::1] vtab, double inv_dx, Py_ssize_t last_cell,
                     double max_strain, long max_sub, cnp.int64_t* nsub) noexcept nogil:
    # one step of size h, split into equal substeps where the path is strained
    cdef double g = 0.0, hs, xn
    cdef Py_ssize_t j, m
    cdef Stages sub
    xn = _rk4(x, h, full, vtab, inv_dx, last_cell, &g)
    if isfinite(g) and h * g > max_strain:
        m = <Py_ssize_t>ceil(h * g / max_strain)
        if m > max_sub:
            m = max_sub
        hs = h / m
        xn = x
        for j in range(m):
            _stages(t + j * hs, hs, times, &sub)
            xn = _rk4(xn, hs, &sub, vtab, inv_dx, last_cell, NULL)
        nsub[0] += m
    return xn


def rk4_run(x0_in, times_in, vtab_in, unbridged_in, double dx, double lo, double hi,
            double t0, double h, Py_ssize_t n_steps, rec_steps_in, long k_limit,
            double max_strain, long max_sub, int n_threads=1):
    cdef double[::1] x = np.array(x0_in, dtype=np.float64)
    cdef const double[::1] times = np.ascontiguousarray(times_in, dtype=np.float64)
    cdef const double[:, ::1] vtab = np.ascontiguousarray(vtab_in, dtype=np.float64)
    cdef const cnp.uint8_t[:, ::1] unbridged = np.ascontiguousarray(unbridged_in, dtype=np.uint8)
    cdef const cnp.int64_t[::1] rec_steps = np.ascontiguousarray(rec_steps_in, dtype=np.int64)
    cdef Py_ssize_t npart = x.shape[0]
    cdef Py_ssize_t nrec = rec_steps.shape[0]
    cdef Py_ssize_t last_cell = vtab.shape[1] - 2

    positions_arr = np.full((nrec, npart), np.nan)
    status_arr = np.zeros(npart, dtype=np.int8)
    fail_step_arr = np.full(npart, -1, dtype=np.int64)
    fail_x_arr = np.full(npart, np.nan)
    cdef double[:, ::1] positions = positions_arr
    cdef cnp.int8_t[::1] status = status_arr
    cdef cnp.int64_t[::1] fail_step = fail_step_arr
    cdef double[::1] fail_x = fail_x_arr
    cdef cnp.int64_t[::1] masked_run = np.zeros(npart, dtype=np.int64)
    cdef cnp.int64_t[::1] sub_count = np.zeros(npart, dtype=np.int64)

    cdef Py_ssize_t p, step, r = 0, cell, kn
    cdef double t, xn, wn
    cdef double inv_dx = 1.0 / dx
    cdef Stages full
    if n_threads < 1:
        n_threads = 1

    if rec_steps[0] == 0:
        positions[0, :] = x
        r = 1
    for step in range(n_steps):
        t = t0 + h * step
        _stages(t, h, times, &full)
        kn = _frame(t + h, times, &wn)
        if wn >= 0.5:
            kn = kn + 1
        for p in prange(npart, nogil=True, num_threads=n_threads, schedule="static"):
            if status[p] != STATUS_OK:
                continue
            xn = _advance(x[p], t, h, &full, times, vtab, inv_dx, last_cell,
                          max_strain, max_sub, &sub_count[p])
            if not isfinite(xn):
                status[p] = STATUS_NONFINITE
            elif xn < lo or xn > hi:
                status[p] = STATUS_WALL
            else:
                cell = _cell(xn * inv_dx, last_cell)
                if unbridged[kn, cell] or unbridged[kn, cell + 1]:
                    masked_run[p] += 1
                else:
                    masked_run[p] = 0
                if masked_run[p] > k_limit:
                    status[p] = STATUS_MASKED
            if status[p] != STATUS_OK:
                fail_step[p] = step + 1
                fail_x[p] = xn
                x[p] = NAN
            else:
                x[p] = xn
        if r < nrec and step + 1 == rec_steps[r]:
            positions[r, :] = x
            r = r + 1
    return positions_arr, status_arr, fail_step_arr, fail_x_arr, int(np.sum(sub_count))
