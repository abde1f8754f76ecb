"""Exception types shared across the package.

Exit-code mapping used by the CLI lives in cli.py; these classes only
carry the diagnostic payload.
"""


class TorusFloerError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(TorusFloerError):
    """Operands live in different Galerkin spaces (n or N differ)."""


class ConfigError(TorusFloerError):
    """Malformed or inconsistent run configuration."""


class DegenerateOrbitError(TorusFloerError):
    """A located periodic orbit has a Floquet multiplier too close to 1."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DegeneracyError(TorusFloerError):
    """Endpoint of a symplectic path is degenerate (det(I - Psi(1)) ~ 0)."""


class ResolutionError(TorusFloerError):
    """A numerical procedure could not be refined to an unambiguous answer."""


class SpectralGapError(TorusFloerError):
    """An eigenvalue sits too close to zero for stable index counting."""


class TruncationError(TorusFloerError):
    """A quantity failed its mode-cutoff stability check; raise N."""


class StiffnessError(TorusFloerError):
    """Adaptive flow integration underflowed its step size."""

    def __init__(self, message, s=None, state=None):
        super().__init__(message)
        self.s = s
        self.state = state


class UndecidedLaunchError(TorusFloerError):
    """A flow launch hit the time horizon without classifiable limit."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class NewtonError(TorusFloerError):
    """Damped Newton failed to converge from the supplied guess."""


class IntegrationQualityError(TorusFloerError):
    """An integrated path violates its conservation-law tolerance."""


class StructuralError(TorusFloerError):
    """A chain-level identity that must hold was violated."""
