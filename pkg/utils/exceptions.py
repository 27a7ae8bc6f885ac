# Custom Exception Classes
# Structured exceptions shared by the estimation library and the command line

import logging
from functools import wraps

logger = logging.getLogger(__name__)


class CCSError(Exception):
    """
    Base class for every error raised by the conditional covariance selection tools.
    """

    def __init__(self, message: str, error_code: str = None, details: dict = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code or "CCS_UNKNOWN"
        self.details = details or {}

        # Errors log themselves once, at construction
        logger.error(f"[{self.error_code}] {message}", extra={"details": self.details})


class ConfigurationError(CCSError):
    """
    Invalid run configuration: unknown key, wrong type or out-of-range value.
    """

    def __init__(self, message: str, config_path: str = None, key: str = None, **kwargs):
        super().__init__(message, "CCS_CONFIG", **kwargs)
        self.config_path = config_path
        self.key = key


class ValidationError(CCSError):
    """
    Invalid argument or input data.
    """

    def __init__(self, message: str, field: str = None, value=None, **kwargs):
        super().__init__(message, "CCS_VALIDATION", **kwargs)
        self.field = field
        self.value = value


class FileOperationError(CCSError):
    """
    Missing, unreadable or unwritable file.
    """

    def __init__(
        self, message: str, file_path: str = None, operation: str = None, **kwargs
    ):
        super().__init__(message, "CCS_FILE", **kwargs)
        self.file_path = file_path
        self.operation = operation


class EmptyBandwidthError(CCSError):
    """
    No sample point lies within the bandwidth of a query point.
    """

    def __init__(self, message: str, z_query: float = None, h: float = None, **kwargs):
        super().__init__(message, "CCS_BANDWIDTH", **kwargs)
        self.z_query = z_query
        self.h = h


class GridMismatchError(CCSError):
    """
    Two objects that must share an index grid (or dimension) do not.
    """

    def __init__(self, message: str, **kwargs):
        super().__init__(message, "CCS_GRID", **kwargs)


class NonPDError(CCSError):
    """
    A matrix expected to be positive definite is not.
    """

    def __init__(self, message: str, grid_index: int = None, **kwargs):
        super().__init__(message, "CCS_NONPD", **kwargs)
        self.grid_index = grid_index


class SolverError(CCSError):
    """
    Numerical failure inside a solver iteration.
    """

    def __init__(self, message: str, iteration: int = None, **kwargs):
        super().__init__(message, "CCS_SOLVER", **kwargs)
        self.iteration = iteration


class NotConvergedError(CCSError):
    """
    A solver reached its iteration limit where convergence was required.
    """

    def __init__(self, message: str, report=None, fold: int = None, **kwargs):
        super().__init__(message, "CCS_NOT_CONVERGED", **kwargs)
        self.report = report
        self.fold = fold


# Exception groups used by the command line to pick an exit code
INPUT_ERRORS = (
    ConfigurationError,
    ValidationError,
    FileOperationError,
    EmptyBandwidthError,
    GridMismatchError,
)
SOLVER_ERRORS = (NotConvergedError, SolverError, NonPDError)


def handle_error_gracefully(func):
    """
    Decorator that wraps unexpected exceptions into CCSError.
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CCSError:
            # already logged
            raise
        except Exception as e:
            logger.exception(f"Unexpected error in {func.__name__}")
            raise CCSError(
                f"Unexpected error in {func.__name__}: {str(e)}",
                "CCS_UNEXPECTED",
                {"original_error": str(e), "function": func.__name__},
            )

    return wrapper
