"""Exception hierarchy for the extractor."""


class ExtractorError(Exception):
    """Base class for all errors raised by this package."""


class ManifestError(ExtractorError):
    """An extraction request is invalid or unsatisfiable."""


class ImageFormatError(ExtractorError):
    """Input image is missing, unreadable, or too small."""


class TensorFormatError(ExtractorError):
    """Malformed tensor container (bad magic, header, or length)."""


class ModelLoadError(ExtractorError):
    """Pretrained weights or their libraries are not available."""


class StageError(ExtractorError):
    """Extraction failure wrapped with the name of the failing stage."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
