"""Exception hierarchy shared across the package."""


class GridchopError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(GridchopError):
    """A parameter value violates an operation's precondition."""


class InvalidInputError(GridchopError):
    """An input dataset does not satisfy an operation's requirements."""


class UnsupportedGeometryError(InvalidInputError):
    """Geometry type not supported by the requested operation."""


class LoadError(GridchopError):
    """A file could not be parsed into a valid in-memory object."""
