"""Exception hierarchy shared by all pilotbox modules."""


class PilotBoxError(Exception):
    """Base class for every error raised by pilotbox."""


class DomainError(PilotBoxError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(PilotBoxError, ValueError):
    """Inconsistent combination of otherwise valid inputs."""


class NumericalError(PilotBoxError, ArithmeticError):
    """A numerical kernel produced non-finite or otherwise unusable output."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateFieldError(NumericalError):
    """Every node of the field is masked (the field is zero)."""


class IllConditionedFieldError(NumericalError):
    """Too many interior nodes are masked to trust the quantum potential."""


class TrajectoryError(NumericalError):
    """A single Bohmian trajectory could not be integrated."""

    def __init__(self, message, time=None, position=None, particle=None):
        super().__init__(message)
        self.time = time
        self.position = position
        self.particle = particle


class WallClampError(TrajectoryError):
    """The particle reached the clamp band next to a wall."""


class MaskedRegionError(TrajectoryError):
    """The particle stayed inside an unbridgeable masked span for too long."""


class EnsembleError(NumericalError):
    """One or more particles of an ensemble failed.

    ``failures`` is a list of :class:`TrajectoryError`, each carrying its
    particle index, ordered by index.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        head = ", ".join(
            f"#{f.particle} ({type(f).__name__} at t={f.time:.6g}, x={f.position:.6g})"
            for f in self.failures[:5]
        )
        more = "" if len(self.failures) <= 5 else f" and {len(self.failures) - 5} more"
        super().__init__(f"{len(self.failures)} particle(s) failed: {head}{more}")
