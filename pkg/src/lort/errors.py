"""Exception hierarchy shared by all lort modules."""


class LortError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LortError):
    """Array shapes are inconsistent with the requested operation."""


class InvalidSpecError(LortError):
    """A convolution / transform spec is structurally invalid."""


class InvalidParameterError(LortError):
    """A scalar parameter is outside its valid range."""


class WavParseError(LortError):
    """A WAV byte stream could not be parsed; message names the field."""


class InvalidInputError(LortError):
    """Signal input violates a precondition (empty, bad hop, ...)."""


class NonInvertibleWindowError(LortError):
    """Overlap-add normalization would divide by (near) zero."""


class DegenerateAttentionError(LortError):
    """Taylor attention denominator collapsed (keys antipodal to query)."""


class WeightLookupError(LortError):
    """A required parameter is missing from the weight store."""


class WeightFormatError(LortError):
    """A serialized weight file is malformed or inconsistent."""


class DivergenceError(LortError):
    """An optimization run exceeded its divergence guard."""
