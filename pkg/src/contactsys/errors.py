"""Exception hierarchy for contactsys."""


class ContactError(Exception):
    """Base class for all library errors."""


class PointOffManifoldError(ContactError, ValueError):
    pass


class NotTangentError(ContactError, ValueError):
    pass


class ModelMismatchError(ContactError, ValueError):
    pass


class SingularSystemError(ContactError, ArithmeticError):
    """The pointwise linear system for a Reeb or Hamiltonian field is singular."""


class StepSizeUnderflowError(ContactError, RuntimeError):
    pass


class ConstraintDriftError(ContactError, RuntimeError):
    pass


class NonRegularFlowError(ContactError, RuntimeError):
    """The reference flow failed to close after one period."""


class AverageNotZeroError(ContactError, ValueError):
    pass


class NoSectionCrossingError(ContactError, RuntimeError):
    pass


class InvarianceError(ContactError, ValueError):
    pass


class RegularModelError(ContactError, ValueError):
    pass


class NotAntipodalError(ContactError, ValueError):
    pass


class NonPositiveMetricError(ContactError, ValueError):
    pass


class FormallyTrivialError(ContactError, ValueError):
    pass


class JetOrderError(ContactError, ValueError):
    pass


class NonFiniteIntegrandError(ContactError, FloatingPointError):
    pass


class DescentError(ContactError, RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(ContactError, ValueError):
    """Configuration problem, optionally carrying a (line, column) position."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
