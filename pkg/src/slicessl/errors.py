"""Exception taxonomy shared across the package."""


class SliceSSLError(Exception):
    """Base class for all package errors."""


class ShapeError(SliceSSLError):
    """Incompatible array shapes; message names both operands."""

    def __init__(self, op, shape_a, shape_b=None):
        self.op = op
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b) if shape_b is not None else None
        if self.shape_b is None:
            msg = f"{op}: bad shape {self.shape_a}"
        else:
            msg = f"{op}: incompatible shapes {self.shape_a} and {self.shape_b}"
        super().__init__(msg)


class NumericError(SliceSSLError):
    """Non-finite value encountered while strict mode is active."""


class ConfigError(SliceSSLError):
    """Invalid or inconsistent configuration."""


class MagicError(SliceSSLError):
    """Unrecognized or unsupported file magic."""


class UnsupportedType(SliceSSLError):
    """Datatype code present in the file but not supported."""


class TruncationError(SliceSSLError):
    """File ends before the declared payload does."""
