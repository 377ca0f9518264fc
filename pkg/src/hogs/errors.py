"""Exception types raised across the package."""


class HogsError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(HogsError):
    """A data file row could not be parsed."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class ValidationError(HogsError):
    """Parsed content violates a dataset invariant."""


class ConfigError(HogsError, ValueError):
    """Invalid configuration value."""


class DomainError(HogsError, ValueError):
    """Mechanism input outside its declared domain."""


class ProtocolError(HogsError):
    """A report or report stream does not match the round configuration."""


class NumericError(HogsError, ArithmeticError):
    """Non-finite values or a zero denominator where none is allowed."""


class TrainingError(HogsError):
    """Training diverged."""

    def __init__(self, epoch, message):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


class BudgetExceededError(HogsError):
    """A mechanism charge would exceed the per-node privacy budget."""


class PhaseError(HogsError):
    """Wraps an error raised inside one pipeline phase."""

    def __init__(self, phase, cause):
        self.phase = phase
        self.cause = cause
        super().__init__(f"[{phase}] {cause}")
