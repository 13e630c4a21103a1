"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed experiment configuration or CLI usage."""


class HypothesisError(ValueError):
    """A theorem hypothesis required by the requested check is violated."""


class DivergenceError(ArithmeticError):
    """A kernel integral diverges (integrability condition fails)."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class EstimationError(RuntimeError):
    """A Monte Carlo estimate cannot be formed from the available samples."""


class NumericsError(RuntimeError):
    """A deterministic solver failed to converge or lost required structure."""
