"""Exception types shared across the package."""


class CodecLensError(Exception):
    """Base class for all errors raised by codec_lens."""


class ShapeMismatchError(CodecLensError):
    """Two tensors that must share a shape do not."""


class WeightFormatError(CodecLensError):
    """A weight file violates the LICW container format."""


class BadMagicError(WeightFormatError):
    """File does not start with the LICW magic bytes."""


class UnsupportedVersionError(WeightFormatError):
    """File declares a container version this reader does not handle."""


class PayloadLengthError(WeightFormatError):
    """Declared header/payload lengths disagree with the actual bytes."""


class WeightShapeError(WeightFormatError):
    """A stored tensor shape is inconsistent with its layer declaration."""


class DecodeError(CodecLensError):
    """A decoder failed while processing a latent."""
