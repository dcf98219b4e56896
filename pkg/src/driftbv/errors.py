"""Exception hierarchy shared by all driftbv modules."""


class DriftBVError(Exception):
    """Base class for every error raised by the package."""


class InvalidInput(DriftBVError, ValueError):
    pass


class GraphHasNoResolvent(DriftBVError):
    pass


class OutsideDomainOfJ(DriftBVError, ValueError):
    pass


class BadBoundarySpec(DriftBVError, ValueError):
    pass


class BadEtaConstants(DriftBVError, ValueError):
    pass


class CutoffDoesNotFit(DriftBVError, ValueError):
    pass


class GridMismatch(DriftBVError, ValueError):
    pass


class ExtensionMarginTooSmall(DriftBVError, ValueError):
    pass


class StepTooLarge(DriftBVError, ValueError):
    pass


class UnknownEstimate(DriftBVError, KeyError):
    pass


class CutoffRejected(DriftBVError):
    pass


class TimeOutOfRange(DriftBVError, ValueError):
    pass


class OracleInapplicable(DriftBVError):
    pass


class ConfigError(DriftBVError, ValueError):
    """Configuration could not be parsed or validated.

    ``line`` is the 1-based line in the source file the problem was traced to,
    or ``None`` when it could not be located.
    """

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

    def __str__(self):
        msg = super().__str__()
        return f"line {self.line}: {msg}" if self.line is not None else msg


class SolveFailed(DriftBVError):
    """Nonlinear or linear solve did not converge."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class RunAborted(DriftBVError):
    """An evolution run stopped at ``step``; ``run`` holds the partial result."""

    def __init__(self, step, cause, run=None):
        super().__init__(f"run aborted at step {step}: {cause}")
        self.step = step
        self.cause = cause
        self.run = run
