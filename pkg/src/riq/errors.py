"""Exception types raised across the pipeline."""


class RiqError(Exception):
    """Base class for every error raised by this package."""


class ImageNotFound(RiqError, FileNotFoundError):
    pass


class UnsupportedFormat(RiqError, ValueError):
    pass


class CorruptImage(RiqError, ValueError):
    pass


class EmptyInput(RiqError, ValueError):
    pass


class EmptyRegion(RiqError, ValueError):
    pass


class OddSide(RiqError, ValueError):
    pass


class IncompatibleSize(RiqError, ValueError):
    pass


class EmptyTrainingSet(RiqError, ValueError):
    pass


class DimensionMismatch(RiqError, ValueError):
    pass


class EmptyCategory(RiqError, ValueError):
    pass


class NonFiniteLoss(RiqError, ArithmeticError):
    pass


class EmptyTestSet(RiqError, ValueError):
    pass


class UnknownKeyword(RiqError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown keyword"


class FormatError(RiqError, ValueError):
    pass


class BadManifest(RiqError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FingerprintMismatch(UserWarning):
    """Index was built with a different model or segmentation parameters."""
