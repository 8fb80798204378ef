"""Exception types shared across the solver stack."""


class ParameterError(ValueError):
    """Invalid parameter or configuration value."""


class GradingViolationError(ParameterError):
    """Graded-interval exponent at or below the admissible floor."""

    def __init__(self, gamma, floor):
        self.gamma = gamma
        self.floor = floor
        super().__init__(
            "grading exponent gamma=%g must exceed the floor 3/(2s)=%g"
            % (gamma, floor)
        )


class SolverError(RuntimeError):
    """Iterative solver failed to converge."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history


class NumericalFailureError(RuntimeError):
    """NaN or Inf detected in an iterate."""


class OracleFailureError(RuntimeError):
    """Brute-force oracle did not reach its tolerance."""


class UnsupportedConfigurationError(ParameterError):
    """Requested combination of options is not supported."""
