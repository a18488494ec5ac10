"""Exception hierarchy.

Every error carries a short machine-readable ``category`` that the CLI
prints and maps onto a process exit code.
"""


class SeiprdError(Exception):
    category = "error"
    exit_code = 1


class DomainError(SeiprdError, ValueError):
    category = "domain"
    exit_code = 3


class NumericError(SeiprdError, ArithmeticError):
    category = "numeric"
    exit_code = 4


class IntegrationDiverged(NumericError):
    category = "integration-diverged"

    def __init__(self, day, message=None):
        self.day = day
        super().__init__(message or f"integration diverged on model day {day}")


class AlignmentError(SeiprdError, ValueError):
    category = "alignment"
    exit_code = 5


class ValidationError(SeiprdError, ValueError):
    category = "validation"
    exit_code = 6


class OrderingError(ValidationError):
    category = "ordering"


class FormatError(ValidationError):
    category = "format"


class InitialisationError(SeiprdError, RuntimeError):
    category = "initialisation"
    exit_code = 7


class DegenerateDistributionError(DomainError):
    category = "degenerate-distribution"


class ConfigError(SeiprdError, ValueError):
    category = "config"
    exit_code = 2
