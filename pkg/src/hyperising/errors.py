"""Exception hierarchy shared by every solver module."""


class IsingError(Exception):
    """Base class for all package errors."""


class MalformedInputError(IsingError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(IsingError, ValueError):
    pass


class UnsupportedGridError(ValidationError):
    pass


class InvalidReferenceError(ValidationError):
    pass


class CapacityError(IsingError):
    """Problem size exceeds an exhaustive or dense-vector limit."""


class ConvergenceError(IsingError, RuntimeError):
    """An iterative solver gave up.

    ``best`` carries the best estimate reached, ``residual`` its residual and
    ``history`` any iterate trace the solver kept.
    """

    def __init__(self, message, best=None, residual=None, history=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.history = list(history) if history is not None else []


class DegenerateModeError(IsingError, ArithmeticError):
    pass


class NumericalIntegrityError(IsingError, ArithmeticError):
    pass
