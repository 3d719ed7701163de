"""Exception hierarchy. Each class maps to one CLI exit code."""


class QpoError(Exception):
    exit_code = 1


class UsageError(QpoError, ValueError):
    """Caller passed arguments that violate a precondition."""

    exit_code = 1


class DataError(QpoError):
    """Input data is missing or inconsistent."""

    exit_code = 2


class ParseError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NumericError(QpoError, ArithmeticError):
    """A factorization or optimization failed numerically."""

    exit_code = 3

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
