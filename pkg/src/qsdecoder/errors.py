"""Exception hierarchy shared by the library and the CLI."""


class QSDecoderError(Exception):
    """Base class for all library errors."""


class DomainError(QSDecoderError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SingularExponentError(DomainError):
    """The closed form is singular at k2 = 1; use the limit evaluator."""


class PrecisionExhaustedError(QSDecoderError, ArithmeticError):
    """Extended precision reached its cap without a trustworthy value."""


class InfeasibleError(QSDecoderError):
    """A constraint cannot be met (for example an empty beam)."""


class EmptyLanguageError(QSDecoderError):
    """The acceptor accepts no string of the requested length."""


class EnumerationOverflowError(QSDecoderError):
    """Enumeration would exceed its configured budget."""


class InputFormatError(QSDecoderError, ValueError):
    """An input file could not be parsed or failed validation."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
