"""Exception hierarchy shared across the package."""


class STPError(Exception):
    """Base class for all package errors."""


class ShapeError(STPError):
    """Tensor dimensions do not line up for the requested operation."""


class NumericsError(STPError):
    """Numerical failure: non-finite values, non-scalar loss, divergence."""


class ParamError(STPError):
    """A named parameter is missing from the store."""


class ConfigError(STPError):
    """Bad or missing configuration."""


class GenerationError(STPError):
    """Synthetic data could not be generated under the given spec."""


class FormatError(STPError):
    """A binary or JSON artifact does not match its on-disk format."""


class InputError(STPError):
    """A clip or prediction input violates a precondition."""
