"""Physical constants and quark-model scale estimates.

All dynamics modules work in natural units (hbar = 1, c = 1); this is the
only place where MeV and fm appear.
"""

import math
from dataclasses import dataclass

from .errors import DomainError

#: CODATA value of hbar*c in MeV*fm.
HBAR_C_MEV_FM = 197.3269804

#: Beta above which a nonrelativistic treatment is flagged as questionable.
BETA_QUESTIONABLE = 0.3

DEFAULT_RADIUS_FM = 1.0
DEFAULT_CURRENT_MASS_MEV = 10.0
DEFAULT_CONSTITUENT_MASS_MEV = 300.0


@dataclass(frozen=True)
class Constants:
    hbar_c: float = HBAR_C_MEV_FM
    c: float = 1.0


CONSTANTS = Constants()


@dataclass(frozen=True)
class QuarkReport:
    radius: float
    momentum: float
    beta_current: float
    beta_constituent: float
    nonrelativistic_questionable: bool

    def to_dict(self):
        return {
            "radius_fm": self.radius,
            "momentum_mev": self.momentum,
            "beta_current": self.beta_current,
            "beta_constituent": self.beta_constituent,
            "nonrelativistic_questionable": self.nonrelativistic_questionable,
        }


def momentum_for_confinement(radius, constants=CONSTANTS):
    """Uncertainty-principle momentum ``hbar*c / r`` in MeV/c for a radius in fm."""
    if not radius > 0 or not math.isfinite(radius):
        raise DomainError(f"radius must be positive and finite, got {radius!r}")
    return constants.hbar_c / radius


def relativistic_beta(p, m):
    """Speed ``p / sqrt(p**2 + m**2)`` of a particle with momentum p and mass m."""
    if p < 0 or m < 0:
        raise DomainError(f"momentum and mass must be non-negative, got p={p!r}, m={m!r}")
    if p == 0 and m == 0:
        raise DomainError("momentum and mass cannot both be zero")
    return p / math.hypot(p, m)


def quark_report(
    radius=DEFAULT_RADIUS_FM,
    current_mass=DEFAULT_CURRENT_MASS_MEV,
    constituent_mass=DEFAULT_CONSTITUENT_MASS_MEV,
    constants=CONSTANTS,
):
    """Confinement momentum and the resulting speeds for both quark masses."""
    if current_mass < 0 or constituent_mass < 0:
        raise DomainError("quark masses must be non-negative")
    p = momentum_for_confinement(radius, constants)
    beta_constituent = relativistic_beta(p, constituent_mass)
    return QuarkReport(
        radius=float(radius),
        momentum=p,
        beta_current=relativistic_beta(p, current_mass),
        beta_constituent=beta_constituent,
        nonrelativistic_questionable=beta_constituent > BETA_QUESTIONABLE,
    )
