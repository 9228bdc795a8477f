"""Exception hierarchy shared across the package."""


class DdsegError(Exception):
    """Base class for all errors raised by this package."""


class TensorFormatError(DdsegError):
    """Malformed tensor container (bad magic, header, or dimensions)."""


class TensorLengthError(TensorFormatError):
    """Payload length does not match the declared shape."""


class UnsupportedDtypeError(TensorFormatError):
    """Dtype code not in the supported set."""


class ParameterError(DdsegError):
    """A parameter is outside its documented domain."""


class ShapeError(DdsegError):
    """Operands disagree on dimensions."""


class EmptyClassError(DdsegError):
    """Every patch of a class was masked; the class carries no mass."""


class EmptyCandidatesError(DdsegError):
    """No class survived early rejection and masking."""


class NumericalError(DdsegError):
    """NaN or other unrecoverable numerical failure."""


class PaletteError(DdsegError):
    """A label has no palette entry."""


class StageError(DdsegError):
    """Pipeline failure wrapped with the name of the failing stage."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
