"""Exception types shared across the package."""


class CascadeError(Exception):
    """Base class for all errors raised by cascade_dist."""


class ParseError(CascadeError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(CascadeError, ValueError):
    pass


class SizeError(CascadeError, ValueError):
    pass


class NumericalConsistencyError(CascadeError, ArithmeticError):
    pass
