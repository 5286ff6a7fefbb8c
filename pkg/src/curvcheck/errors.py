"""Exception types shared across the package."""


class ToolkitError(Exception):
    """Base class for every error this package raises deliberately."""


class LexError(ToolkitError):
    """Unknown character while tokenizing an expression string."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at position {position})")
        self.position = position


class ParseError(ToolkitError):
    """Malformed expression text."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at position {position})")
        self.position = position


class ArityError(ParseError):
    """Function call with the wrong number of arguments."""


class EvalError(ToolkitError):
    """Expression could not be evaluated to a finite IEEE double."""


class UnboundSymbolError(EvalError):
    """A free symbol had no value bound to it."""


class DomainError(EvalError):
    """Evaluation left the mathematical domain (ln of a non-positive
    number, division by zero, negative base under a fractional power, ...).
    Raised instead of ever returning a silent NaN or infinity."""


class DegenerateMetricError(ToolkitError):
    """Metric value matrix is singular at the requested point."""


class StageError(ToolkitError):
    """Ansatz functions do not satisfy the substitutions required by the
    requested derivation stage."""


class NullConeError(ToolkitError):
    """Radial null slopes are undefined at the requested point."""


class DegenerateConeError(NullConeError):
    """The dt^2 coefficient vanishes: the null-slope quadratic degenerates."""


class ComplexSlopeError(NullConeError):
    """Negative discriminant: no real radial null directions at the point."""


class MetricFileError(ToolkitError):
    """Malformed metric definition file."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
