"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: validation/config problems exit with 2,
numeric failures with 3, cap violations with 4.
"""


class FermigasError(Exception):
    """Base class for all library errors."""


class ValidationError(FermigasError):
    """A domain object or configuration violates a construction invariant."""


class ConfigError(ValidationError):
    """A configuration file failed validation."""


class GridResolutionError(ValidationError):
    """A grid is too coarse to resolve the requested object."""


class MomentumCoverageError(ValidationError):
    """Momentum grid does not cover the requested Fermi sea."""

    def __init__(self, message, required_half_width=None):
        super().__init__(message)
        self.required_half_width = required_half_width


class HypothesisViolationError(ValidationError):
    """An operation's mathematical hypotheses (mass, bound, support) fail."""


class NumericError(FermigasError):
    """A numerical routine failed to produce a valid result."""


class ConvergenceError(NumericError):
    """An iterative routine exhausted its iteration cap."""


class MassJumpError(NumericError):
    """No chemical potential reaches the target mass within tolerance.

    Happens when the mass-versus-multiplier map jumps across the target,
    e.g. for potentials with grid-induced flat spots. Stores the residual
    gap and the bracketing multiplier values.
    """

    def __init__(self, message, lam_low, lam_high, mass_low, mass_high):
        super().__init__(message)
        self.lam_low = lam_low
        self.lam_high = lam_high
        self.mass_low = mass_low
        self.mass_high = mass_high


class CapExceededError(FermigasError):
    """A desk-scale resource cap was exceeded."""
