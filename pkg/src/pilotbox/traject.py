"""Bohmian trajectories, Born-rule sampling and equivariance checks.

Particles follow ``dx/dt = v(x, t)`` where v is the guidance velocity of
each stored frame, interpolated linearly in x (between nodes) and in t
(between frames), and integrated with classical RK4.

Masked nodes of a frame are bridged by linear interpolation when the masked
span is at most ``MAX_BRIDGE`` nodes. Longer spans are filled the same way
but flagged; a particle that stays in a flagged span for more than
``MASKED_STEP_LIMIT`` consecutive steps is aborted. Particles are confined
to ``[dx, L - dx]`` and reaching that band is an error, not a reflection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import get_backend, thread_count
from .errors import (
    DegenerateFieldError,
    DomainError,
    EnsembleError,
    MaskedRegionError,
    TrajectoryError,
    WallClampError,
)
from .evolve import FrameSeries
from .pilot import guidance_velocity
from .well import Grid1D, WaveFunction, trapezoid

MAX_BRIDGE = 3
MASKED_STEP_LIMIT = 10

#: Steps with ``dt_traj * |dv/dx| > MAX_STRAIN`` on the particle's path are
#: split into equal substeps. Keeps the discrete flow monotone near nodes of
#: psi, where the velocity gradient blows up.
MAX_STRAIN = 0.25
MAX_SUBSTEPS = 1 << 16

_STATUS_ERRORS = {1: WallClampError, 2: MaskedRegionError, 3: TrajectoryError}
_STATUS_TEXT = {
    1: "reached the wall clamp band",
    2: f"stayed in an unbridgeable masked span for more than {MASKED_STEP_LIMIT} steps",
    3: "produced a non-finite position",
}


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray

    @property
    def displacement(self) -> float:
        return float(np.max(np.abs(self.positions - self.positions[0])))


@dataclass(frozen=True, eq=False)
class Ensemble:
    particle_count: int
    seed: int
    times: np.ndarray
    positions: np.ndarray  # (n_times, particle_count)

    @property
    def trajectories(self):
        return [Trajectory(self.times, self.positions[:, p]) for p in range(self.particle_count)]

    @property
    def initial_positions(self) -> np.ndarray:
        return self.positions[0]

    def max_displacement(self) -> float:
        return float(np.max(np.abs(self.positions - self.positions[0])))

    def order_preserved(self) -> bool:
        """True when the initial particle ordering holds at every stored time."""
        order = np.argsort(self.positions[0], kind="stable")
        ranked = self.positions[:, order]
        return bool(np.all(np.diff(ranked, axis=1) >= 0))

    def positions_at(self, t: float) -> np.ndarray:
        tol = 1e-9 * max(abs(self.times[-1] - self.times[0]), 1.0)
        if not self.times[0] - tol <= t <= self.times[-1] + tol:
            raise DomainError(f"t={t} lies outside the ensemble span")
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) <= tol:
            return self.positions[k]
        k = int(np.clip(np.searchsorted(self.times, t) - 1, 0, self.times.size - 2))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1.0 - w) * self.positions[k] + w * self.positions[k + 1]


@dataclass(frozen=True)
class KSResult:
    statistic: float
    sample_count: int
    time: float


class VelocityTable:
    """Velocity samples ``v[k, i]`` at frame time k and grid node i."""

    def __init__(self, grid: Grid1D, times, v, unbridged=None):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.v = np.ascontiguousarray(v, dtype=float)
        if self.v.shape != (self.times.size, grid.n_points):
            raise DomainError("velocity table shape does not match times and grid")
        if self.times.size < 2 or not np.all(np.diff(self.times) > 0):
            raise DomainError("velocity table needs at least two strictly increasing times")
        if not np.all(np.isfinite(self.v)):
            raise DomainError("velocity table must be finite")
        if unbridged is None:
            unbridged = np.zeros(self.v.shape, dtype=bool)
        self.unbridged = np.ascontiguousarray(unbridged, dtype=np.uint8)

    @classmethod
    def from_frames(cls, frames: FrameSeries) -> "VelocityTable":
        if len(frames) < 2:
            raise DomainError("frame series spans zero time")
        v = np.empty((len(frames), frames.grid.n_points))
        flags = np.empty(v.shape, dtype=bool)
        for k in range(len(frames)):
            try:
                raw = guidance_velocity(frames[k])
            except DegenerateFieldError as exc:
                raise DegenerateFieldError(f"frame {k} (t={frames.times[k]}): {exc}") from None
            v[k], flags[k] = bridge_masked(raw, frames.grid.positions)
        return cls(frames.grid, frames.times, v, flags)

    @classmethod
    def stationary(cls, grid: Grid1D, v, t_span) -> "VelocityTable":
        """Time-independent field ``v`` (array over nodes or a scalar)."""
        row = np.broadcast_to(np.asarray(v, dtype=float), (grid.n_points,))
        return cls(grid, [t_span[0], t_span[1]], np.vstack([row, row]))


def bridge_masked(v: np.ndarray, x: np.ndarray):
    """Fill NaN entries of v by linear interpolation over valid nodes.

    Returns ``(filled, flags)`` where flags mark nodes of masked spans longer
    than ``MAX_BRIDGE``. Spans touching a wall are extended with the edge
    value; the wall node itself does not count toward the span length.
    """
    valid = np.isfinite(v)
    if not valid.any():
        raise DegenerateFieldError("velocity field has no valid nodes")
    filled = np.interp(x, x[valid], v[valid]) if not valid.all() else v.copy()
    flags = np.zeros(v.shape, dtype=bool)
    masked = ~valid
    if masked.any():
        edges = np.diff(np.concatenate(([0], masked.view(np.int8), [0])))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1)
        last = v.size - 1
        for a, b in zip(starts, stops):
            length = b - a - (a == 0) - (b - 1 == last)
            if length > MAX_BRIDGE:
                flags[a:b] = True
    return filled, flags


def _time_axis(table, dt_traj, record_stride, record_times=()):
    if not (dt_traj > 0 and math.isfinite(dt_traj)):
        raise DomainError(f"dt_traj must be positive and finite, got {dt_traj!r}")
    t0, t1 = float(table.times[0]), float(table.times[-1])
    n_steps = max(1, math.ceil((t1 - t0) / dt_traj - 1e-9))
    h = (t1 - t0) / n_steps
    if record_stride is None:
        rec = [0, n_steps]
    else:
        if int(record_stride) != record_stride or record_stride < 1:
            raise DomainError(f"record_stride must be a positive integer, got {record_stride!r}")
        rec = list(range(0, n_steps + 1, int(record_stride))) + [n_steps]
    tol = 1e-9 * max(t1 - t0, 1.0)
    for t in record_times:
        if not t0 - tol <= t <= t1 + tol:
            raise DomainError(f"record time {t} lies outside [{t0}, {t1}]")
        # the step at or just before t, and the one after when t falls between
        q = (t - t0) / h
        rec.append(int(math.floor(q + 1e-9)))
        rec.append(min(n_steps, int(math.ceil(q - 1e-9))))
    return t0, h, n_steps, np.unique(np.asarray(rec, dtype=np.int64))


def _as_table(field) -> VelocityTable:
    if isinstance(field, VelocityTable):
        return field
    if isinstance(field, FrameSeries):
        return VelocityTable.from_frames(field)
    raise TypeError(f"expected FrameSeries or VelocityTable, got {type(field).__name__}")


def _integrate(x0, table, dt_traj, record_stride, backend, threads, record_times=()):
    grid = table.grid
    dx = grid.dx
    lo, hi = dx, grid.length - dx
    x0 = np.asarray(x0, dtype=float)
    t0, h, n_steps, rec = _time_axis(table, dt_traj, record_stride, record_times)
    kernels = get_backend(backend)
    positions, status, fail_step, fail_x, _ = kernels.rk4_run(
        x0, table.times, table.v, table.unbridged, dx, lo, hi, t0, h, n_steps, rec,
        MASKED_STEP_LIMIT, MAX_STRAIN, MAX_SUBSTEPS, threads,
    )
    # starting inside the clamp band counts as a wall failure at t0
    start_bad = (x0 < lo) | (x0 > hi) | ~np.isfinite(x0)
    if start_bad.any():
        status = status.copy()
        status[start_bad] = 1
        fail_step[start_bad] = 0
        fail_x[start_bad] = x0[start_bad]
    failures = []
    for p in np.flatnonzero(status):
        code = int(status[p])
        t_fail = t0 + h * float(fail_step[p])
        failures.append(
            _STATUS_ERRORS[code](
                f"particle {p} {_STATUS_TEXT[code]} at t={t_fail:.6g}, x={fail_x[p]:.6g}",
                time=t_fail,
                position=float(fail_x[p]),
                particle=int(p),
            )
        )
    return t0 + h * rec.astype(float), positions, failures


def integrate_trajectory(x0: float, field, dt_traj: float, record_stride: int = 1,
                         backend: str | None = None) -> Trajectory:
    """Integrate one particle from ``x0`` over the whole span of ``field``.

    ``field`` is a :class:`FrameSeries` or a prepared :class:`VelocityTable`.
    The step is ``dt_traj`` shrunk so that it divides the span exactly.
    """
    table = _as_table(field)
    if not 0 < x0 < table.grid.length:
        raise DomainError(f"x0={x0} is outside the open interval (0, {table.grid.length})")
    times, positions, failures = _integrate([x0], table, dt_traj, record_stride, backend, 1)
    if failures:
        raise failures[0]
    return Trajectory(times, positions[:, 0])


def _uniform_open(rng, count):
    # 53-bit uniforms strictly inside (0, 1)
    return (rng.integers(0, 2**53, size=count, dtype=np.int64).astype(float) + 0.5) / 2.0**53


def density_cdf(density: np.ndarray, dx: float) -> np.ndarray:
    """Normalized cumulative trapezoid integral of a nodal density."""
    cells = 0.5 * dx * (density[1:] + density[:-1])
    cdf = np.concatenate(([0.0], np.cumsum(cells)))
    total = cdf[-1]
    if not total > 0 or not math.isfinite(total):
        raise DegenerateFieldError("density integrates to zero")
    cdf /= total
    cdf[-1] = 1.0
    return cdf


def sample_initial_positions(psi0: WaveFunction, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` positions from |psi0|^2 by inverse-transform sampling.

    The CDF is the cumulative trapezoid rule on the grid, inverted linearly
    inside each cell. Uniforms come from numpy's PCG64 seeded with ``seed``
    (53-bit integers mapped to the open unit interval), so samples are
    reproducible across platforms.
    """
    if int(count) != count or count < 1:
        raise DomainError(f"count must be a positive integer, got {count!r}")
    cdf = density_cdf(psi0.density, psi0.grid.dx)
    x = psi0.grid.positions
    u = _uniform_open(np.random.Generator(np.random.PCG64(seed)), int(count))
    i = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, x.size - 2)
    width = cdf[i + 1] - cdf[i]
    frac = np.divide(u - cdf[i], width, out=np.full(u.shape, 0.5), where=width > 0)
    return x[i] + frac * (x[i + 1] - x[i])


def run_ensemble(psi0: WaveFunction, frames, count: int, seed: int, dt_traj: float,
                 record_stride: int | None = 1, backend: str | None = None,
                 threads: int | None = None, record_times=()) -> Ensemble:
    """Sample ``count`` Born-distributed particles and integrate them all.

    Positions are kept every ``record_stride`` steps (``None``: only the
    first and last step) and at the steps bracketing each of
    ``record_times``. Raises :class:`EnsembleError` listing every failed
    particle index. Results do not depend on ``threads``.
    """
    table = _as_table(frames)
    x0 = sample_initial_positions(psi0, count, seed)
    threads = thread_count() if threads is None else int(threads)
    times, positions, failures = _integrate(
        x0, table, dt_traj, record_stride, backend, threads, record_times
    )
    if failures:
        raise EnsembleError(failures)
    return Ensemble(particle_count=int(count), seed=int(seed), times=times, positions=positions)


def ks_statistic(samples: np.ndarray, x: np.ndarray, cdf: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance between samples and a piecewise-linear CDF."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    f = np.interp(s, x, cdf)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max(), 0.0))


def equivariance_test(ensemble: Ensemble, frames: FrameSeries, t: float) -> KSResult:
    """KS distance between ensemble positions at t and |psi(., t)|^2."""
    density = frames.density_at(t)
    cdf = density_cdf(density, frames.grid.dx)
    stat = ks_statistic(ensemble.positions_at(t), frames.grid.positions, cdf)
    return KSResult(statistic=stat, sample_count=ensemble.particle_count, time=float(t))
