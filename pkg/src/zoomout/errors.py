class ZoomoutError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ZoomoutError):
    """Bad or inconsistent input data (files, label maps, manifests)."""


class FormatError(DataError):
    """A binary artifact does not match its declared format."""


class LayoutError(DataError):
    """Feature block layout differs from the one recorded for the run."""


class NumericError(ZoomoutError, FloatingPointError):
    """Training produced a non-finite loss or gradient."""
