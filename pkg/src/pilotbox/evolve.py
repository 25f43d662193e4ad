"""Crank-Nicolson evolution between hard walls.

The Hamiltonian is the Dirichlet central-difference operator
``H psi_i = -(hbar^2 / 2m dx^2) (psi_{i-1} - 2 psi_i + psi_{i+1})`` on the
interior nodes; wall nodes are pinned to zero. One step solves
``(1 + i dt H / 2 hbar) psi' = (1 - i dt H / 2 hbar) psi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import get_backend
from .errors import DomainError, NumericalError
from .well import WaveFunction, WellSpec, eigenenergy, trapezoid


@dataclass(frozen=True)
class EvolutionPlan:
    dt: float
    n_steps: int
    frame_stride: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise DomainError(f"dt must be positive and finite, got {self.dt!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be an integer >= 1, got {self.n_steps!r}")
        if int(self.frame_stride) != self.frame_stride or not 1 <= self.frame_stride <= self.n_steps:
            raise DomainError(
                f"frame_stride must be an integer in [1, n_steps], got {self.frame_stride!r}"
            )

    @classmethod
    def covering(cls, t_final: float, max_dt: float, frame_stride: int = 1) -> "EvolutionPlan":
        """Plan whose steps land exactly on ``t_final`` with ``dt <= max_dt``."""
        if not t_final > 0:
            raise DomainError(f"t_final must be positive, got {t_final!r}")
        n = max(1, math.ceil(t_final / max_dt - 1e-9))
        return cls(t_final / n, n, min(frame_stride, n))

    @property
    def t_final(self) -> float:
        return self.n_steps * self.dt

    def store_steps(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, self.frame_stride, dtype=np.int64)
        if steps[-1] != self.n_steps:
            steps = np.append(steps, np.int64(self.n_steps))
        return steps


class FrameSeries:
    """Stored states of one evolution, kept as a ``(n_frames, n_points)`` array."""

    def __init__(self, times, values, grid, spec):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=np.complex128)
        self.grid = grid
        self.spec = spec
        if self.values.shape != (self.times.size, grid.n_points):
            raise DomainError("frame array shape does not match times and grid")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise DomainError("frame times must be strictly increasing")
        self.times.flags.writeable = False
        self.values.flags.writeable = False

    def __len__(self):
        return self.times.size

    def __getitem__(self, k) -> WaveFunction:
        return WaveFunction(self.grid, self.values[k], self.spec)

    @property
    def frames(self):
        return [self[k] for k in range(len(self))]

    def norms(self) -> np.ndarray:
        return np.sqrt(trapezoid(np.abs(self.values) ** 2, self.grid.dx))

    def densities(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def density_at(self, t: float) -> np.ndarray:
        """|psi|^2 at time t, linear in time between stored frames."""
        t0, t1 = self.times[0], self.times[-1]
        tol = 1e-9 * max(abs(t1 - t0), 1.0)
        if not t0 - tol <= t <= t1 + tol:
            raise DomainError(f"t={t} lies outside the frame span [{t0}, {t1}]")
        if len(self) == 1:
            return np.abs(self.values[0]) ** 2
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self) - 2))
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        if abs(w) < 1e-9:
            return np.abs(self.values[k]) ** 2
        if abs(w - 1.0) < 1e-9:
            return np.abs(self.values[k + 1]) ** 2
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * np.abs(self.values[k]) ** 2 + w * np.abs(self.values[k + 1]) ** 2


def hamiltonian_coefficient(psi: WaveFunction) -> float:
    """``hbar^2 / (2 m dx^2)``, the off-diagonal magnitude of H."""
    return psi.spec.hbar**2 / (2.0 * psi.spec.mass * psi.grid.dx**2)


def apply_hamiltonian(psi: WaveFunction) -> np.ndarray:
    c = hamiltonian_coefficient(psi)
    p = psi.values
    out = np.zeros_like(p)
    out[1:-1] = -c * (p[:-2] - 2.0 * p[1:-1] + p[2:])
    return out


def energy_expectation(psi: WaveFunction) -> float:
    """Discrete ``<psi|H|psi> / <psi|psi>``."""
    num = np.vdot(psi.values, apply_hamiltonian(psi)).real
    return float(num / np.vdot(psi.values, psi.values).real)


def _coefficients(psi, dt):
    # r = i dt c / (2 hbar); LHS = 1 + i dt H/2hbar, RHS = 1 - i dt H/2hbar
    r = 1j * dt * hamiltonian_coefficient(psi) / (2.0 * psi.spec.hbar)
    return 1.0 + 2.0 * r, -r, 1.0 - 2.0 * r, r


def _run(psi, dt, store_steps, backend):
    if not (dt != 0 and math.isfinite(dt)):
        raise DomainError(f"dt must be non-zero and finite, got {dt!r}")
    kernels = get_backend(backend)
    diag_l, off_l, diag_r, off_r = _coefficients(psi, dt)
    interior, failed = kernels.cn_run(psi.values[1:-1], diag_l, off_l, diag_r, off_r, store_steps)
    if failed >= 0:
        raise NumericalError(f"Crank-Nicolson step {failed} produced non-finite values", step=failed)
    out = np.zeros((interior.shape[0], psi.grid.n_points), dtype=np.complex128)
    out[:, 1:-1] = interior
    return out


def crank_nicolson_step(psi: WaveFunction, dt: float, backend: str | None = None) -> WaveFunction:
    """One Cayley step of size dt. Negative dt runs the exact inverse step."""
    out = _run(psi, dt, np.array([1], dtype=np.int64), backend)
    return WaveFunction(psi.grid, out[0], psi.spec)


def evolve(psi0: WaveFunction, plan: EvolutionPlan, backend: str | None = None) -> FrameSeries:
    """Evolve psi0 for ``plan.n_steps`` steps, storing every ``frame_stride``-th
    state plus the first and the last."""
    steps = plan.store_steps()
    values = _run(psi0, plan.dt, steps, backend)
    return FrameSeries(steps * plan.dt, values, psi0.grid, psi0.spec)


def run_steps(psi0: WaveFunction, dt: float, n_steps: int, backend: str | None = None) -> WaveFunction:
    """Final state after n_steps steps of size dt (any sign)."""
    if int(n_steps) != n_steps or n_steps < 1:
        raise DomainError(f"n_steps must be an integer >= 1, got {n_steps!r}")
    out = _run(psi0, dt, np.array([n_steps], dtype=np.int64), backend)
    return WaveFunction(psi0.grid, out[0], psi0.spec)


def beat_period(spec: WellSpec, mode_a: int, mode_b: int) -> float:
    """Recurrence time ``2 pi hbar / |E_a - E_b|`` of a two-mode density."""
    ea, eb = eigenenergy(spec, mode_a), eigenenergy(spec, mode_b)
    if mode_a == mode_b:
        raise DomainError("beat period needs two distinct modes")
    return 2.0 * math.pi * spec.hbar / abs(ea - eb)
