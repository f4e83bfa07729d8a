"""Exception types shared across the package."""


class GGMoEError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GGMoEError, ValueError):
    """Shapes or dimensions of inputs do not agree."""


class NumericalError(GGMoEError, ArithmeticError):
    """A computation failed numerically (underflow, singularity, solver failure)."""


class InputFormatError(GGMoEError, ValueError):
    """A file or config could not be parsed; message carries file context."""
