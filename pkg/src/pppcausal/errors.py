"""Exception hierarchy shared across the package."""


class PPPError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataFormatError(PPPError):
    """Malformed input file (missing columns, unparsable cells)."""

    exit_code = 3


class ValidationError(PPPError):
    """Input parsed but violates a sample invariant."""

    exit_code = 3

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class ModelError(PPPError):
    """A nuisance model could not be fit."""

    exit_code = 4


class SingularDesignError(ModelError):
    pass


class SeparationError(ModelError):
    """Logistic MLE does not exist because the classes are separable."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class InitializationError(ModelError):
    pass


class DegenerateVarianceError(ModelError):
    """Every influence-function term is zero, so the standard error is 0."""


class StatisticUndefined(PPPError):
    """Raised when a test statistic cannot be computed for an assignment.

    Monte Carlo loops catch this and count the draw as degenerate.
    """

    exit_code = 4


class DesignError(PPPError):
    exit_code = 2


class UnstableBootstrapError(PPPError):
    exit_code = 5


class StudyReliabilityError(PPPError):
    exit_code = 5
