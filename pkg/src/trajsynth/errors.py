"""Exception hierarchy. The CLI maps these onto exit codes."""


class TrajsynthError(Exception):
    exit_code = 4


class ValidationError(TrajsynthError, ValueError):
    """Input violates a documented invariant (exit code 3)."""

    exit_code = 3


class ParseError(ValidationError):
    """Malformed file contents."""


class NumericError(TrajsynthError, ArithmeticError):
    """Non-finite values during training or sampling (exit code 4)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
