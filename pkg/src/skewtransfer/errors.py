"""Exception types shared across the package."""


class SkewTransferError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(SkewTransferError, ValueError):
    """A point lies outside the unit interval."""


class GapError(SkewTransferError, ValueError):
    """A point lies on the measure-zero complement of the branch intervals."""


class ImageRangeError(SkewTransferError, ValueError):
    """A value lies outside the image of the requested branch."""


class ConstructionError(SkewTransferError, ValueError):
    """Invalid parameters passed to a map or fiber-map constructor."""


class ContractViolation(SkewTransferError, ValueError):
    """An input breaks a documented precondition."""


class AtomCapError(SkewTransferError, ValueError):
    """An atomic measure exceeds the configured atom cap."""


class HypothesisViolation(SkewTransferError, ValueError):
    """A standing dynamical hypothesis (e.g. H3) fails for the system."""


class FitError(SkewTransferError, ValueError):
    """Not enough usable points for an exponential fit."""


class ConvergenceError(SkewTransferError, RuntimeError):
    """An iteration failed to converge; carries the last residual."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history


class UnknownFamilyError(SkewTransferError, ValueError):
    """A configuration names a map or fibre family that does not exist."""


class ConfigError(SkewTransferError, ValueError):
    """A configuration file is malformed or inconsistent."""
