"""Exception taxonomy shared across the package.

Every error raised by this package derives from :class:`RotcertError`, so
callers can catch one type at a process boundary (CLI, experiment harness)
while tests can assert on the precise failure class.
"""


class RotcertError(Exception):
    """Base class for all errors raised by rotcert."""


class DimensionMismatch(RotcertError):
    """Operands disagree on the number of variables or on a shape."""


class StructuralError(RotcertError):
    """A program or matrix is ill formed (asymmetry, bad block index, ...)."""


class DegenerateSet(RotcertError):
    """A measurement set is too small or too collinear to determine a rotation."""


class ParseError(RotcertError):
    """A text input could not be parsed. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class RelaxationOrderError(RotcertError):
    """The requested relaxation order cannot accommodate a constraint degree."""

    def __init__(self, message, offending_degree=None):
        super().__init__(message)
        self.offending_degree = offending_degree


class Unsupported(RotcertError):
    """The requested configuration is outside what this implementation covers."""


class NoNontrivialEta(RotcertError):
    """No eta produces a bound below the trivial one at this inlier rate."""


class VacuousBound(RotcertError):
    """The bound denominator is nonpositive, so the formula certifies nothing."""


class InfiniteBound(RotcertError):
    """A bound formula diverges at the supplied parameters."""


class OutOfRegime(RotcertError):
    """Parameters violate the regime a bound requires. Carries the limit."""

    def __init__(self, message, beta_max=None):
        super().__init__(message)
        self.beta_max = beta_max


class DeskScaleExceeded(RotcertError):
    """A dense construction was requested beyond the supported problem size."""


class EmptySupport(RotcertError):
    """All candidate weights are zero, so nothing can be sampled or rounded."""


class RoundingFailure(RotcertError):
    """Rounding could not produce a usable estimate from the relaxation output."""


class ConfigError(RotcertError):
    """Inconsistent or out-of-range configuration values."""
