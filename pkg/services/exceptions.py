"""
Exception hierarchy shared by the services.

Each class carries the exit status the command-line surface maps it to.
"""


class CapabilityError(Exception):
    """Base class for every failure the pipeline reports."""
    exit_code = 1


class ParseError(CapabilityError, ValueError):
    """Input file is missing, malformed or inconsistent with its schema."""
    exit_code = 2


class TopologyError(ParseError):
    """Feeder is not a tree rooted at the slack, or phases do not nest."""


class NetworkValueError(ParseError):
    """Feeder parameter out of range (negative resistance, bad load mix)."""


class DomainError(CapabilityError, ValueError):
    """Argument outside the domain of a function (probability, fraction)."""
    exit_code = 2


class DimensionError(CapabilityError, ValueError):
    """Vector or matrix sizes do not match."""
    exit_code = 2


class InsufficientDataError(CapabilityError, ValueError):
    """Not enough samples left to fit an error model."""
    exit_code = 3


class SingularSensitivityError(CapabilityError):
    """Load-composition matrix K cannot be inverted."""
    exit_code = 4

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SolverError(CapabilityError):
    """Linear program could not be solved."""
    exit_code = 4


class IterationLimitError(SolverError):
    """Simplex hit its iteration limit; best feasible point is attached."""

    def __init__(self, message, best_x=None, phase=None):
        super().__init__(message)
        self.best_x = best_x
        self.phase = phase


class InfeasibleError(SolverError):
    """Voltage limits cannot be met for any admissible dispatch."""

    def __init__(self, message, node_phase=None, violation=None):
        super().__init__(message)
        self.node_phase = node_phase
        self.violation = violation


class NotConvergedError(CapabilityError):
    """Power flow result used before it converged."""
    exit_code = 4


class ValidationFailed(CapabilityError):
    """Monte Carlo violation rate exceeded its bound."""
    exit_code = 5


class NothingValidatedError(ValidationFailed):
    """No feasible region was left to check."""
