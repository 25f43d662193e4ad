"""Polar decomposition, quantum potential, guidance velocity and energy split.

Writing ``psi = R * exp(i*S/hbar)``, the quantum potential is
``Q = -(hbar**2 / 2m) * R'' / R`` and the guidance velocity is
``v = S' / m = (hbar/m) * Im(psi'/psi)``. Both are evaluated with second
order central differences on interior nodes.

Nodes of R are singular for Q. A node is masked when R is below
``EPS_R * max(R)`` or when the phase jumps by more than pi/2 to a neighbour:
the latter is how a node of a real field shows up when it falls between
grid points (R = |psi| has a kink there, so any stencil across it is wrong).
Wall nodes are always masked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFieldError, IllConditionedFieldError
from .well import WaveFunction

#: Relative amplitude below which a node counts as a node of R.
EPS_R = 1e-6

#: Largest phase change between neighbouring valid nodes.
MAX_PHASE_STEP = np.pi / 2

#: Largest masked fraction of interior nodes accepted by quantum_potential.
MAX_MASKED_FRACTION = 0.5


@dataclass(frozen=True, eq=False)
class PolarField:
    R: np.ndarray
    S: np.ndarray
    valid_mask: np.ndarray
    hbar: float

    def reconstruct(self) -> np.ndarray:
        """``R * exp(i*S/hbar)`` on valid nodes, NaN elsewhere."""
        out = np.full(self.R.shape, np.nan + 0j)
        m = self.valid_mask
        out[m] = self.R[m] * np.exp(1j * self.S[m] / self.hbar)
        return out


@dataclass(frozen=True, eq=False)
class QuantumPotentialField:
    Q: np.ndarray
    valid_mask: np.ndarray
    masked_fraction: float


@dataclass(frozen=True, eq=False)
class EnergyPartition:
    kinetic: np.ndarray
    quantum: np.ndarray
    classical: np.ndarray
    total: np.ndarray
    valid_mask: np.ndarray


def node_mask(values: np.ndarray) -> np.ndarray:
    """Boolean mask of nodes where polar quantities are well defined."""
    R = np.abs(values)
    rmax = R.max()
    if not rmax > 0:
        return np.zeros(R.shape, dtype=bool)
    valid = R >= EPS_R * rmax
    valid[0] = valid[-1] = False
    step = np.abs(np.angle(values[1:] * np.conj(values[:-1])))
    jump = (step > MAX_PHASE_STEP) & valid[1:] & valid[:-1]
    valid[1:] &= ~jump
    valid[:-1] &= ~jump
    return valid


def _mask_or_raise(psi):
    valid = node_mask(psi.values)
    if not valid.any():
        raise DegenerateFieldError("no valid nodes: the field vanishes everywhere")
    return valid


def polar_decompose(psi: WaveFunction) -> PolarField:
    """Split psi into amplitude R and phase-action S.

    S is ``hbar * arg(psi)`` unwrapped along consecutive valid nodes, starting
    from the principal value at the first valid node; masked nodes hold NaN.
    """
    valid = _mask_or_raise(psi)
    hbar = psi.spec.hbar
    R = np.abs(psi.values)
    S = np.full(R.shape, np.nan)
    S[valid] = hbar * np.unwrap(np.angle(psi.values[valid]))
    return PolarField(R=R, S=S, valid_mask=valid, hbar=hbar)


def _masked_fraction(valid):
    return float(np.count_nonzero(~valid[1:-1])) / (valid.size - 2)


def quantum_potential(psi: WaveFunction, check_conditioning: bool = True) -> QuantumPotentialField:
    """Quantum potential on valid interior nodes (NaN on masked nodes)."""
    if psi.grid.n_points < 5:
        raise IllConditionedFieldError("quantum potential needs at least 5 grid nodes")
    valid = _mask_or_raise(psi)
    fraction = _masked_fraction(valid)
    if check_conditioning and fraction > MAX_MASKED_FRACTION:
        raise IllConditionedFieldError(
            f"{fraction:.1%} of interior nodes are masked (limit {MAX_MASKED_FRACTION:.0%})"
        )
    spec, dx = psi.spec, psi.grid.dx
    R = np.abs(psi.values)
    Q = np.full(R.shape, np.nan)
    inner = valid[1:-1]
    lap = R[:-2] - 2.0 * R[1:-1] + R[2:]
    Q[1:-1][inner] = -(spec.hbar**2 / (2.0 * spec.mass)) * lap[inner] / (dx * dx * R[1:-1][inner])
    Q += 0.0  # no signed zeros where R'' vanishes
    return QuantumPotentialField(Q=Q, valid_mask=valid, masked_fraction=fraction)


def guidance_velocity(psi: WaveFunction) -> np.ndarray:
    """Bohmian velocity ``(hbar/m) Im(psi'/psi)``; NaN on masked nodes.

    A field with identically zero imaginary part gives exactly zero.
    """
    valid = _mask_or_raise(psi)
    spec, dx = psi.spec, psi.grid.dx
    p = psi.values
    v = np.full(p.shape, np.nan)
    inner = valid[1:-1]
    ratio = (p[2:][inner] - p[:-2][inner]) / p[1:-1][inner]
    v[1:-1][inner] = (spec.hbar / spec.mass) * ratio.imag / (2.0 * dx)
    return v


def energy_partition(psi: WaveFunction) -> EnergyPartition:
    """Nodewise kinetic, quantum and classical energy (zero potential inside)."""
    qfield = quantum_potential(psi)
    v = guidance_velocity(psi)
    valid = qfield.valid_mask & np.isfinite(v)
    kinetic = np.where(valid, 0.5 * psi.spec.mass * v * v, np.nan)
    quantum = np.where(valid, qfield.Q, np.nan)
    classical = np.where(valid, 0.0, np.nan)
    return EnergyPartition(
        kinetic=kinetic,
        quantum=quantum,
        classical=classical,
        total=kinetic + quantum + classical,
        valid_mask=valid,
    )


def density_weighted_mean(psi: WaveFunction, values: np.ndarray) -> float:
    """Mean of ``values`` under |psi|^2, restricted to finite entries."""
    ok = np.isfinite(values)
    w = psi.density * ok
    return float(np.sum(w * np.where(ok, values, 0.0)) / np.sum(w))
