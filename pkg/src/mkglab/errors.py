"""Exception types raised across the package."""


class MKGError(Exception):
    """Base class for all package errors."""


class BracketingFailure(MKGError):
    pass


class NonConvergence(MKGError):
    pass


class ParameterOutOfRange(MKGError, ValueError):
    pass


class ProfileMismatch(MKGError, ValueError):
    pass


class ConvergenceFailure(MKGError):
    pass


class GridMismatch(MKGError, ValueError):
    pass


class BoxTooSmall(MKGError, ValueError):
    pass


class ConstraintSolveFailure(MKGError):
    pass


class NumericBlowup(MKGError):
    """Raised when a field exceeds the blow-up guard.

    The last good state is kept on ``last_state`` so callers can write it out.
    """

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


class FitDiverged(MKGError):
    pass


class OutsideStabilityWindow(MKGError):
    pass


class InsufficientSamples(MKGError, ValueError):
    pass


class RegionLeftBox(MKGError, ValueError):
    pass


class UnwrapAmbiguity(MKGError):
    pass


class ConfigInvalid(MKGError, ValueError):
    pass
