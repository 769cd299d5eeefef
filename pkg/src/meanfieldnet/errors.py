"""meanfieldnet.errors

Exception hierarchy shared by every module, and the mapping from exceptions to
CLI exit codes.

Exit codes:
    0: success
    1: infeasible problem or flagged result
    2: configuration / domain error
    3: numerical failure
"""

from typing import Any, Dict, List, Optional, Tuple

EXIT_OK = 0
EXIT_FLAGGED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class MeanFieldError(Exception):
    """Base class for all package errors."""

    exit_code: int = EXIT_CONFIG


class ConfigurationError(MeanFieldError, ValueError):
    def __init__(
        self,
        message: str,
        diagnostics: Optional[List[Tuple[str, str]]] = None,
    ):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class DomainError(MeanFieldError, ValueError):
    pass


class SizeError(ConfigurationError):
    pass


class PolicyCoverageError(MeanFieldError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class InfeasibleProblemError(MeanFieldError):
    exit_code = EXIT_FLAGGED


class RoutingError(MeanFieldError):
    exit_code = EXIT_FLAGGED


class NumericalError(MeanFieldError, ArithmeticError):
    exit_code = EXIT_NUMERICAL


class DegenerateDistributionError(NumericalError):
    pass


class NumericalConditioningError(NumericalError):
    def __init__(self, message: str, spectral_radius: float):
        super().__init__(f"{message} (spectral radius {spectral_radius:.12g})")
        self.spectral_radius = spectral_radius


class DinkelbachStallError(NumericalError):
    def __init__(self, message: str, iterates: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.iterates = iterates or []


class StepSizeError(NumericalError):
    pass


def exit_code_for(exc: BaseException) -> int:
    """Return the CLI exit code for an exception raised by the package."""
    if isinstance(exc, MeanFieldError):
        return exc.exit_code
    if isinstance(exc, (ValueError, KeyError, OSError)):
        return EXIT_CONFIG
    if isinstance(exc, ArithmeticError):
        return EXIT_NUMERICAL
    return EXIT_CONFIG
