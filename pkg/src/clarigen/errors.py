"""Exception types shared across the package."""


class ClarigenError(Exception):
    """Base class for all package errors."""


class ShapeError(ClarigenError):
    """Operands have incompatible shapes."""


class ContractError(ClarigenError):
    """A documented precondition was violated."""


class GraphError(ClarigenError):
    """Invalid use of the autodiff graph (e.g. backward on a consumed tape)."""


class ParseError(ClarigenError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(ClarigenError):
    """A checkpoint file is malformed or inconsistent with the model."""
