import pytest

from meanfieldnet.errors import (
    EXIT_CONFIG,
    EXIT_FLAGGED,
    EXIT_NUMERICAL,
    ConfigurationError,
    DomainError,
    InfeasibleProblemError,
    NumericalConditioningError,
    PolicyCoverageError,
    RoutingError,
    SizeError,
    StepSizeError,
    exit_code_for,
)


@pytest.mark.parametrize(
    "error, code",
    [
        (ConfigurationError("bad"), EXIT_CONFIG),
        (SizeError("big"), EXIT_CONFIG),
        (DomainError("alpha"), EXIT_CONFIG),
        (PolicyCoverageError("missing"), EXIT_CONFIG),
        (InfeasibleProblemError("floor"), EXIT_FLAGGED),
        (RoutingError("empty"), EXIT_FLAGGED),
        (StepSizeError("courant"), EXIT_NUMERICAL),
        (NumericalConditioningError("radius", 1.0), EXIT_NUMERICAL),
        (ValueError("plain"), EXIT_CONFIG),
        (FileNotFoundError("absent"), EXIT_CONFIG),
        (ZeroDivisionError("plain"), EXIT_NUMERICAL),
    ],
)
def test_exit_codes(error, code):
    assert exit_code_for(error) == code


def test_configuration_error_keeps_diagnostics():
    error = ConfigurationError("invalid", [("alpha", "must exceed 2")])
    assert error.diagnostics == [("alpha", "must exceed 2")]
    assert isinstance(error, ValueError)


def test_conditioning_error_reports_the_radius():
    error = NumericalConditioningError("at the boundary", 1.0)
    assert error.spectral_radius == 1.0
    assert "spectral radius 1" in str(error)


def test_policy_coverage_message_is_not_quoted():
    assert str(PolicyCoverageError("needs (2, 3)")) == "needs (2, 3)"
