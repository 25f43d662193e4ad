"""Numpy/LAPACK implementations of the hot loops.

Same signatures as the compiled ``_ckernels`` module. Crank-Nicolson
solves go through LAPACK's tridiagonal LU (factored once); the RK4
ensemble is vectorized over particles with the same floating-point
operation order as the compiled loop, so both give identical positions.
"""

import numpy as np
from scipy.linalg import lapack

STATUS_OK = 0
STATUS_WALL = 1
STATUS_MASKED = 2
STATUS_NONFINITE = 3


def cn_run(psi, diag_lhs, off_lhs, diag_rhs, off_rhs, store_steps):
    """Apply ``n = store_steps[-1]`` Crank-Nicolson steps to interior values.

    Returns ``(frames, failed_step)``; frames[j] holds the state after
    ``store_steps[j]`` steps and ``failed_step`` is -1 on success.
    """
    psi = np.array(psi, dtype=np.complex128)
    n = psi.size
    store_steps = np.asarray(store_steps, dtype=np.int64)
    frames = np.empty((store_steps.size, n), dtype=np.complex128)
    dl = np.full(n - 1, off_lhs, dtype=np.complex128)
    d = np.full(n, diag_lhs, dtype=np.complex128)
    dl, d, du, du2, ipiv, info = lapack.zgttrf(dl, d, dl.copy())
    if info != 0:
        return frames, 0
    rhs = np.empty_like(psi)
    j = 0
    if store_steps[0] == 0:
        frames[0] = psi
        j = 1
    for step in range(1, int(store_steps[-1]) + 1):
        np.multiply(psi, diag_rhs, out=rhs)
        rhs[1:] += off_rhs * psi[:-1]
        rhs[:-1] += off_rhs * psi[1:]
        psi, info = lapack.zgttrs(dl, d, du, du2, ipiv, rhs)
        if info != 0:
            return frames, step
        if step == store_steps[j]:
            if not np.all(np.isfinite(psi)):
                return frames, step
            frames[j] = psi
            j += 1
    return frames, -1


class _Field:
    """Bilinear (space, time) lookup into a velocity table."""

    def __init__(self, times, vtab, dx):
        self.times = times
        self.vtab = vtab
        self.inv_dx = 1.0 / dx
        self.last_cell = vtab.shape[1] - 2
        self.last_frame = vtab.shape[0] - 2

    def frame(self, t):
        k = np.searchsorted(self.times, t, side="right") - 1
        k = np.minimum(np.maximum(k, 0), self.last_frame)
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return k, np.minimum(np.maximum(w, 0.0), 1.0)

    def cell(self, x):
        s = x * self.inv_dx
        safe = np.where(np.isfinite(s) & (s >= 0), s, 0.0)
        i = np.where(s >= self.last_cell, self.last_cell, safe.astype(np.int64))
        return i, s - i

    def __call__(self, x, k, w):
        i, f = self.cell(x)
        v = self.vtab
        va = (1.0 - f) * v[k, i] + f * v[k, i + 1]
        vb = (1.0 - f) * v[k + 1, i] + f * v[k + 1, i + 1]
        return (1.0 - w) * va + w * vb

    def strain(self, x, k):
        i, _ = self.cell(x)
        v = self.vtab
        g = np.maximum(np.abs(v[k, i + 1] - v[k, i]), np.abs(v[k + 1, i + 1] - v[k + 1, i])) * self.inv_dx
        return np.where(np.isfinite(x), g, 0.0)


def _rk4(field, x, t, h):
    half = 0.5 * h
    k0, w0 = field.frame(t)
    k1, w1 = field.frame(t + half)
    k2, w2 = field.frame(t + h)
    a = field(x, k0, w0)
    xb = x + half * a
    b = field(xb, k1, w1)
    xc = x + half * b
    c = field(xc, k1, w1)
    xd = x + h * c
    d = field(xd, k2, w2)
    xn = x + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
    return xn, (x, xb, xc, xd, xn), (k0, k1, k1, k2, k2)


def rk4_run(x0, times, vtab, unbridged, dx, lo, hi, t0, h, n_steps, rec_steps,
            k_limit, max_strain, max_sub, n_threads=1):
    """Classical RK4 for ``dx/dt = v(x, t)`` over an interpolated velocity table.

    Each step of size h is first taken in full. If the largest cell
    velocity gradient G met at the stage points gives ``h*G > max_strain``,
    the step is redone as ``m = ceil(h*G/max_strain)`` (at most ``max_sub``)
    equal substeps. Returns ``(positions, status, fail_step, fail_x,
    substeps)`` with positions recorded after each step in ``rec_steps``.
    ``n_threads`` is accepted for signature parity and ignored.
    """
    field = _Field(np.asarray(times, dtype=float), np.asarray(vtab, dtype=float), dx)
    unbridged = np.asarray(unbridged, dtype=bool)
    x = np.array(x0, dtype=np.float64)
    npart = x.size
    rec_steps = np.asarray(rec_steps, dtype=np.int64)
    positions = np.full((rec_steps.size, npart), np.nan)
    status = np.zeros(npart, dtype=np.int8)
    fail_step = np.full(npart, -1, dtype=np.int64)
    fail_x = np.full(npart, np.nan)
    masked_run = np.zeros(npart, dtype=np.int64)
    active = np.ones(npart, dtype=bool)
    substeps = 0

    r = 0
    if rec_steps[0] == 0:
        positions[0] = x
        r = 1
    for step in range(n_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        t = t0 + h * step
        xa = x[idx]
        xn, probes, frames = _rk4(field, xa, t, h)
        g = field.strain(probes[0], frames[0])
        for xp, kp in zip(probes[1:], frames[1:]):
            g = np.maximum(g, field.strain(xp, kp))
        need = np.isfinite(g) & (h * g > max_strain)
        if need.any():
            sel = np.flatnonzero(need)
            m = np.minimum(np.ceil(h * g[sel] / max_strain), max_sub).astype(np.int64)
            hs = h / m
            xs = xa[sel]
            for j in range(int(m.max())):
                go = m > j
                xs[go], _, _ = _rk4(field, xs[go], t + j * hs[go], hs[go])
            xn[sel] = xs
            substeps += int(m.sum())

        bad = ~np.isfinite(xn)
        wall = ~bad & ((xn < lo) | (xn > hi))
        kn, wn = field.frame(t + h)
        kn = kn + 1 if wn >= 0.5 else kn
        cell, _ = field.cell(np.where(bad, lo, xn))
        in_mask = unbridged[kn, cell] | unbridged[kn, cell + 1]
        runs = np.where(in_mask, masked_run[idx] + 1, 0)
        masked_run[idx] = runs
        stuck = ~bad & ~wall & (runs > k_limit)

        for flag, code in ((bad, STATUS_NONFINITE), (wall, STATUS_WALL), (stuck, STATUS_MASKED)):
            if flag.any():
                failed = idx[flag]
                status[failed] = code
                fail_step[failed] = step + 1
                fail_x[failed] = xn[flag]
                active[failed] = False
        ok = ~(bad | wall | stuck)
        x[idx[ok]] = xn[ok]
        x[idx[~ok]] = np.nan
        if r < rec_steps.size and step + 1 == rec_steps[r]:
            positions[r] = x
            r += 1
    return positions, status, fail_step, fail_x, substeps
