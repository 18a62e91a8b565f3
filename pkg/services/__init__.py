# Service layer initialization
# Only the exceptions are re-exported: models import them, and the services import models.
from services.exceptions import (
    CapabilityError, ParseError, TopologyError, NetworkValueError, DomainError,
    DimensionError, InsufficientDataError, SingularSensitivityError, SolverError,
    IterationLimitError, InfeasibleError, NotConvergedError, ValidationFailed,
    NothingValidatedError,
)

__all__ = [
    'CapabilityError',
    'ParseError',
    'TopologyError',
    'NetworkValueError',
    'DomainError',
    'DimensionError',
    'InsufficientDataError',
    'SingularSensitivityError',
    'SolverError',
    'IterationLimitError',
    'InfeasibleError',
    'NotConvergedError',
    'ValidationFailed',
    'NothingValidatedError'
]
