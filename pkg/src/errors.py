"""Exceptions raised by the pan-sharpening toolkit."""


class PansharpenError(Exception):
    """Base class for all toolkit errors."""

    pass


class DimensionError(PansharpenError, ValueError):
    """Raised when raster shapes, band counts or scale ratios do not line up."""

    pass


class ParameterError(PansharpenError, ValueError):
    """Raised when a numeric parameter is outside its allowed range."""

    pass


class NumericError(PansharpenError):
    """Raised when a computation produces non-finite values."""

    def __init__(self, message: str, step: str | None = None):
        super().__init__(message)
        self.step = step


class FormatError(PansharpenError):
    """Raised when a raster file is malformed or unsupported."""

    pass
