"""Exception hierarchy shared across the package."""


class FscilError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(FscilError):
    """Operand dimensions are incompatible."""


class InputError(FscilError):
    """A value is outside the operation's domain (bad label, missing class, ...)."""


class ConfigError(FscilError):
    """A configuration is inconsistent, incomplete, or carries unknown keys."""


class TrainingError(FscilError):
    """Optimization produced a non-finite loss or otherwise failed."""


class ParseError(FscilError):
    """A flat file could not be parsed; message names the offending line."""


class FormatError(FscilError):
    """A flat file parsed but violates the expected schema."""
