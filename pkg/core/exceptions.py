"""
Custom exception classes for robust error handling
"""
from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


class BaseCustomException(Exception):
    """Base custom exception class"""

    def __init__(
        self,
        message: str,
        exit_code: int = EXIT_CHECK_FAILED,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.exit_code = exit_code
        self.details = details or {}
        super().__init__(self.message)


class ConfigurationError(BaseCustomException):
    """Raised when a scenario or command line cannot be used as given"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_INPUT_ERROR, details=details)


class ValidationError(BaseCustomException):
    """Raised when data validation fails"""

    def __init__(self, message: str, field: str = None, details: Optional[Dict[str, Any]] = None):
        if field:
            details = details or {}
            details["field"] = field

        super().__init__(message=message, exit_code=EXIT_INPUT_ERROR, details=details)


class CertificateError(ValidationError):
    """Raised when a certificate violates its own preconditions"""


class GrowthRateError(ValidationError):
    """Raised when a growth rate cannot be built"""


class SubspaceError(ValidationError):
    """Raised when a vector is not in the subspace an operation requires"""


class ExpressionError(BaseCustomException):
    """Base class for coefficient expression problems"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message=message, exit_code=EXIT_INPUT_ERROR, details=details)


class ExprSyntaxError(ExpressionError):
    """Raised when an expression does not match the grammar"""

    def __init__(self, message: str, offset: int, source: str):
        super().__init__(
            message=f"{message} (at offset {offset})",
            details={"offset": offset, "source": source}
        )
        self.offset = offset


class UnknownSymbolError(ExprSyntaxError):
    """Raised for unknown function names and identifiers"""

    def __init__(self, kind: str, name: str, offset: int, source: str):
        super().__init__(f"unknown {kind} '{name}'", offset, source)
        self.kind = kind
        self.name = name


class BindingError(ExpressionError):
    """Raised when a state variable index is outside 1..n"""


class ExprDomainError(ExpressionError):
    """Raised when evaluation leaves the real domain of an operation"""


class GateError(BaseCustomException):
    """Raised when a hypothesis gate fails"""

    def __init__(self, gate: str, message: str, details: Optional[Dict[str, Any]] = None):
        details = details or {}
        details["gate"] = gate
        super().__init__(message=f"gate '{gate}' failed: {message}", details=details)
        self.gate = gate


class IntegrationError(BaseCustomException):
    """Raised when the ODE integrator gives up"""

    def __init__(self, message: str, interval: tuple, details: Optional[Dict[str, Any]] = None):
        details = details or {}
        details["interval"] = [float(interval[0]), float(interval[1])]
        super().__init__(
            message=f"integration failed on [{interval[0]:.6g}, {interval[1]:.6g}]: {message}",
            details=details
        )


class ConvergenceError(BaseCustomException):
    """Raised when an iteration, quadrature or bracket search does not converge"""


class DegenerateFitError(BaseCustomException):
    """Raised when a regression has no spread in its abscissa"""


class NotApplicableError(BaseCustomException):
    """Raised when a quantity is requested for an empty subspace"""
