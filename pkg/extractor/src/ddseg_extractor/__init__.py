"""Exports engine-ready logits, self-attention tensors, and guides."""

from ddseg_extractor.backbone import (
    BackboneOutput,
    PretrainedBackbone,
    StatsBackbone,
    cell_stats,
)
from ddseg_extractor.errors import (
    ExtractorError,
    ImageFormatError,
    ManifestError,
    ModelLoadError,
    StageError,
    TensorFormatError,
)
from ddseg_extractor.extract import (
    DEFAULT_BLOCKS,
    DEFAULT_TEMPLATE,
    KNOWN_BLOCKS,
    ExtractionManifest,
    ExtractionResult,
    extract,
)
from ddseg_extractor.tensor_io import read_tensor, write_tensor

__all__ = [
    "BackboneOutput",
    "DEFAULT_BLOCKS",
    "DEFAULT_TEMPLATE",
    "ExtractionManifest",
    "ExtractionResult",
    "ExtractorError",
    "ImageFormatError",
    "KNOWN_BLOCKS",
    "ManifestError",
    "ModelLoadError",
    "PretrainedBackbone",
    "StageError",
    "StatsBackbone",
    "TensorFormatError",
    "cell_stats",
    "extract",
    "read_tensor",
    "write_tensor",
]
