"""Exception types shared across the toolkit.

Two families matter to callers: bad input (files, schemas, flag
combinations) and math that leaves its domain (projection failures,
degenerate alignments). The CLI maps them to distinct exit codes.
"""


class CamrayError(Exception):
    """Base class for all toolkit errors."""


class InputError(CamrayError, ValueError):
    """Malformed or missing input: files, JSON schemas, option combinations."""


class GeometryError(CamrayError, ValueError):
    """Domain error in camera or pose math.

    Raised for focal parameters outside the model's domain, points that a
    camera cannot project, pixels outside the lift's validity region,
    degenerate alignment problems, and similar conditions.
    """


class UnsupportedModelError(GeometryError):
    """An encoding or operation does not support the given camera model."""
