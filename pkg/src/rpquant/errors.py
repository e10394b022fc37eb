"""Exception types shared across the package."""


class RPQuantError(Exception):
    pass


class DomainError(RPQuantError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class GeometryError(RPQuantError, ArithmeticError):
    """A projective image reached or wrapped through the point at infinity."""


class ResourceError(RPQuantError, RuntimeError):
    """An enumeration would exceed the desk-scale product cap."""


class UnsupportedError(RPQuantError, NotImplementedError):
    """The operation is not available for this kind of system."""
