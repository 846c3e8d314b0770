from enum import Enum
from typing import Optional, Dict, Any


class ErrorLevel(Enum):
    """Error severity levels."""

    FATAL = "FATAL"  # Abort the command
    ERROR = "ERROR"  # Skip the item, continue processing
    WARNING = "WARNING"  # Continue with a fallback
    INFO = "INFO"  # Informational message


class SDEError(Exception):
    """Base exception class for spectral-sde errors."""

    exit_code = 3

    def __init__(
        self,
        message: str,
        level: ErrorLevel,
        code: str,
        file: Optional[str] = None,
        line: Optional[int] = None,
        context: Optional[Dict[str, Any]] = None,
    ):
        self.message = message
        self.level = level
        self.code = code
        self.file = file
        self.line = line
        self.context = context or {}
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        """Convert error to dictionary format."""
        return {
            "level": self.level.value,
            "code": self.code,
            "message": self.message,
            "file": self.file,
            "line": self.line,
            "context": self.context,
            "exit_code": self.exit_code,
        }


# Bad input: exit code 2


class DimensionError(SDEError):
    """Raised when matrix shapes are empty or do not conform."""

    exit_code = 2

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.ERROR, "E001", **kwargs)


class DegenerateInputError(SDEError):
    """Raised for all-zero spectra, zero-norm rows and similar inputs."""

    exit_code = 2

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.ERROR, "E002", **kwargs)


class RangeError(SDEError):
    """Raised when a scalar argument lies outside its domain."""

    exit_code = 2

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.ERROR, "E003", **kwargs)


class ContractError(SDEError):
    """Raised when an input violates a documented precondition."""

    exit_code = 2

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.ERROR, "E004", **kwargs)


class FormatError(SDEError):
    """Raised when a matrix file has a malformed header or body."""

    exit_code = 2

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.FATAL, "E005", **kwargs)


class FileOperationError(SDEError):
    """Raised when file operations fail."""

    exit_code = 2

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.FATAL, "E006", **kwargs)


class ConfigurationError(SDEError):
    """Raised when configuration is invalid."""

    exit_code = 2

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.FATAL, "E007", **kwargs)


# Internal numeric failures: exit code 3


class NumericError(SDEError):
    """Raised when non-finite values enter or leave a computation."""

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.FATAL, "E101", **kwargs)


class ConvergenceError(SDEError):
    """Raised when an iterative method hits its iteration cap."""

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.FATAL, "E102", **kwargs)


class DegeneracyError(SDEError):
    """Raised when a singular-value gap is too small to differentiate through."""

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.WARNING, "E103", **kwargs)


class TrainingError(SDEError):
    """Raised when training diverges."""

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.FATAL, "E104", **kwargs)


class CheckFailure(SDEError):
    """Raised when a verification command finds a failing check."""

    exit_code = 1

    def __init__(self, message: str, **kwargs):
        super().__init__(message, ErrorLevel.ERROR, "E201", **kwargs)
