"""Infinite square well: grids, eigenstates, energies and superpositions.

Eigenstates use the complete basis ``sqrt(2/L) * sin(m*pi*x/L)``, m >= 1.
States written with wavenumber ``2*pi*n/L`` map onto it through
:func:`paper_mode_to_standard` (m = 2n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class WellSpec:
    length: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("length", "mass", "hbar"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[0, length]`` including both wall nodes."""

    n_points: int
    length: float = 1.0
    positions: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 3:
            raise DomainError(f"n_points must be an integer >= 3, got {self.n_points!r}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise DomainError(f"length must be positive and finite, got {self.length!r}")
        object.__setattr__(self, "n_points", int(self.n_points))
        x = np.linspace(0.0, self.length, self.n_points)
        x[-1] = self.length
        x.flags.writeable = False
        object.__setattr__(self, "positions", x)

    @property
    def dx(self) -> float:
        return self.length / (self.n_points - 1)

    @classmethod
    def for_spec(cls, spec: WellSpec, n_points: int) -> "Grid1D":
        return cls(n_points, spec.length)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex field values on a grid.

    Construction only checks shape and finiteness; the Dirichlet condition
    is guaranteed by the constructors in this module and by the propagator,
    and can be queried with :attr:`is_dirichlet`. Synthetic fields used for
    diagnostics (e.g. a uniform amplitude) are therefore representable.
    """

    grid: Grid1D
    values: np.ndarray
    spec: WellSpec

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.shape != (self.grid.n_points,):
            raise ConfigurationError(
                f"values have shape {values.shape}, grid has {self.grid.n_points} points"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("wavefunction values must be finite")
        if not math.isclose(self.grid.length, self.spec.length, rel_tol=1e-12):
            raise ConfigurationError(
                f"grid length {self.grid.length} does not match well length {self.spec.length}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return self.grid.positions

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def is_dirichlet(self) -> bool:
        return self.values[0] == 0 and self.values[-1] == 0

    def norm(self) -> float:
        return math.sqrt(trapezoid(self.density, self.grid.dx))

    def scaled(self, factor: complex) -> "WaveFunction":
        return WaveFunction(self.grid, self.values * factor, self.spec)


def trapezoid(samples, dx):
    """Trapezoid rule for uniformly spaced samples along the last axis."""
    samples = np.asarray(samples)
    return dx * (samples.sum(axis=-1) - 0.5 * (samples[..., 0] + samples[..., -1]))


def inner_product(a: WaveFunction, b: WaveFunction) -> complex:
    """Trapezoid approximation of ``<a|b>``."""
    if a.grid != b.grid:
        raise ConfigurationError("wavefunctions live on different grids")
    return complex(trapezoid(np.conj(a.values) * b.values, a.grid.dx))


def _check_mode(mode):
    if int(mode) != mode or mode < 1:
        raise DomainError(f"mode must be a positive integer, got {mode!r}")
    return int(mode)


def _check_grid(spec, grid):
    if not math.isclose(grid.length, spec.length, rel_tol=1e-12):
        raise ConfigurationError(
            f"grid spans [0, {grid.length}] but the well has length {spec.length}"
        )


def eigenfunction_values(spec: WellSpec, mode: int, x) -> np.ndarray:
    """Normalized eigenfunction evaluated at arbitrary positions."""
    mode = _check_mode(mode)
    x = np.asarray(x, dtype=float)
    return math.sqrt(2.0 / spec.length) * np.sin(mode * math.pi * x / spec.length)


def _grid_sine(mode, n_points):
    # sin(pi*mode*i/N) with the argument reduced to [0, pi/2] in integer
    # arithmetic, so values near x = L keep full relative precision.
    n = n_points - 1
    r = (mode * np.arange(n_points, dtype=np.int64)) % (2 * n)
    sign = np.where(r > n, -1.0, 1.0)
    r = np.where(r > n, r - n, r)
    r = np.minimum(r, n - r)
    return sign * np.sin(np.pi * r / n)


def eigenstate(spec: WellSpec, mode: int, grid: Grid1D) -> WaveFunction:
    """Stationary state ``sqrt(2/L) sin(mode*pi*x/L)`` sampled on ``grid``."""
    _check_grid(spec, grid)
    mode = _check_mode(mode)
    values = (math.sqrt(2.0 / spec.length) * _grid_sine(mode, grid.n_points)).astype(np.complex128)
    values[0] = values[-1] = 0.0
    return WaveFunction(grid, values, spec)


def eigenenergy(spec: WellSpec, mode: int) -> float:
    mode = _check_mode(mode)
    return (mode * math.pi * spec.hbar / spec.length) ** 2 / (2.0 * spec.mass)


def paper_mode_to_standard(n: int) -> int:
    """Mode index m of the state ``sin(2*pi*n*x/L)``, i.e. ``2*n``."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    return 2 * int(n)


def superpose(terms, spec: WellSpec, grid: Grid1D) -> WaveFunction:
    """Normalized ``sum(c * psi_mode)`` for ``terms = [(c, mode), ...]``.

    The result is renormalized with the discrete norm, so it has unit
    trapezoid norm even where sampled eigenstates are not exactly
    orthonormal.
    """
    terms = list(terms)
    if not terms:
        raise DomainError("superposition needs at least one term")
    modes = [_check_mode(m) for _, m in terms]
    if len(set(modes)) != len(modes):
        raise DomainError(f"duplicate modes in superposition: {modes}")
    coeffs = np.array([complex(c) for c, _ in terms])
    if not np.any(coeffs != 0):
        raise DomainError("all superposition coefficients are zero")
    _check_grid(spec, grid)
    values = np.zeros(grid.n_points, dtype=np.complex128)
    for c, m in zip(coeffs, modes):
        if c != 0:
            values += c * math.sqrt(2.0 / spec.length) * _grid_sine(m, grid.n_points)
    values[0] = values[-1] = 0.0
    psi = WaveFunction(grid, values, spec)
    return psi.scaled(1.0 / psi.norm())
