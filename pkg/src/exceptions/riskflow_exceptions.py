from typing import Any, Optional


class RiskFlowException(Exception):
    """Base exception for riskflow"""
    exit_code = 2


class InvalidArgumentError(RiskFlowException):
    """Argument outside the admissible range or with the wrong shape"""
    pass


class ConfigurationError(RiskFlowException):
    """Configuration related errors"""
    pass


class ValidationError(RiskFlowException):
    """Validation related errors"""
    pass


class InvalidMaskError(RiskFlowException):
    """Mask or raw policy that looks into the future"""
    pass


class InconsistentPortfolioError(RiskFlowException):
    """Money or weight allocation that is not self-financing"""
    pass


class UnsupportedModelError(RiskFlowException):
    """Model without the coefficients a computation needs"""
    pass


class DegenerateMarketError(RiskFlowException):
    """Market where a nonzero policy carries no risk"""
    exit_code = 3


class ConvergenceError(RiskFlowException):
    """Iteration cap reached before the tolerance"""
    exit_code = 4

    def __init__(self, message: str, residual: float = float('nan'),
                 iterations: int = 0, last_iterate: Optional[Any] = None):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations
        self.last_iterate = last_iterate
