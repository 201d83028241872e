"""Exception types shared across the package."""


class CocycleLabError(Exception):
    """Base class for every error raised by cocycle_lab."""


class RotationMatrix(CocycleLabError):
    """Singular directions requested for a matrix that is (numerically) a rotation."""


class DirectionMismatch(CocycleLabError):
    """Cancellation requested for a pair whose singular directions are not aligned."""


class DegenerateDistribution(CocycleLabError):
    """Potential distribution with a single support point."""


class MonotonicityViolation(CocycleLabError):
    """Family lifts are not increasing in the parameter."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InsufficientEvents(CocycleLabError):
    """No large-deviation events were observed; carries the lower-bound report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NoCrossing(CocycleLabError):
    """No sign change of the cancellation target inside a jump cell."""


class ConvergenceFailure(CocycleLabError):
    """Eigenpair residual contract could not be met."""


class DegenerateSupport(CocycleLabError):
    """Too few usable sites for an exponential decay fit."""


class ConfigError(CocycleLabError):
    """Invalid or incomplete run configuration."""


class IneligibleFamily(ConfigError):
    """Family fails the monotonicity check required by the jump scan."""
