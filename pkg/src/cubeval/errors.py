"""Exception types shared across the toolkit."""


class CubevalError(Exception):
    """Base class for all toolkit errors."""


class DegenerateRotation(CubevalError, ValueError):
    """A 6D rotation whose direction vectors are zero or parallel."""


class NonPositiveDepth(CubevalError, ValueError):
    pass


class BehindCamera(CubevalError, ValueError):
    pass


class SchemaError(CubevalError, ValueError):
    """A JSON record is missing fields, has unknown fields or bad values."""


class ReferentialError(SchemaError):
    """An annotation points at an image id that does not exist."""


class GeometryError(SchemaError):
    """A rotation matrix too far from SO(3) to be repaired."""


class InsufficientData(CubevalError, ValueError):
    pass
