from typing import Optional


class FuncBayesError(Exception):
    """Base error for the package."""


class SpecError(FuncBayesError, ValueError):
    """A model or settings value is out of its allowed range."""


class DomainError(FuncBayesError, ValueError):
    """An evaluation point lies outside the basis domain."""


class ShapeError(FuncBayesError, ValueError):
    """Array dimensions are inconsistent."""


class ConfigError(FuncBayesError, ValueError):
    pass


class NumericalError(FuncBayesError, ArithmeticError):
    def __init__(self, message: str, slice_name: Optional[str] = None) -> None:
        super().__init__(message)
        self.slice_name = slice_name


class DegenerateDataError(FuncBayesError):
    pass


class DegenerateDrawsError(FuncBayesError):
    pass


class DegenerateTruthError(FuncBayesError):
    pass


class InitError(FuncBayesError, RuntimeError):
    def __init__(self, message: str, replication: Optional[int] = None) -> None:
        super().__init__(message)
        self.replication = replication


class IngestError(FuncBayesError, ValueError):
    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None) -> None:
        super().__init__(message)
        self.row = row
        self.column = column


class DivergenceWarning(UserWarning):
    pass


def error_record(exc: BaseException) -> dict:
    """Machine-readable description of an exception, as printed by the CLI."""
    record = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("slice_name", "replication", "row", "column"):
        value = getattr(exc, attr, None)
        if value is not None:
            record[attr] = value
    return record
