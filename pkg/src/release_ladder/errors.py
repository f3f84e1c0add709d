"""Exception types shared across the package."""


class LadderError(Exception):
    """Base class for solver failures."""


class NonConvergence(LadderError):
    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularJacobian(LadderError):
    def __init__(self, message: str, condition_number: float = float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class OrderingViolation(LadderError):
    """Converged point is not an admissible two-reset geometry."""


class UnsupportedPayoff(ValueError):
    pass


class DegenerateBand(ValueError):
    pass


class NoSignChange(ValueError):
    pass


class InfeasibleMode(LadderError):
    pass


class InsufficientData(ValueError):
    pass


class EstimationError(RuntimeError):
    pass


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class DegeneratePosterior(ValueError):
    """Posterior variance is already zero; a Gaussian update is undefined."""
