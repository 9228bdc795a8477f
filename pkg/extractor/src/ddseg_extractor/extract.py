"""Single-image extraction into the engine's input file set.

One call to :func:`extract` writes, under the manifest's output
directory: ``logits.ddt1`` with shape (N, N_c), one ``attn_<tag>.ddt1``
of shape (H_b, N_b, N_b) per requested block, the cropped image as
``guide.ppm``, ``classes.txt`` with one raw class name per line, and
``sidecar.json`` binding the patch and block grids to the class names.
File names and layout match what the engine's own fixture generator
emits, so an extraction directory is directly runnable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ddseg_extractor.backbone import BackboneOutput, StatsBackbone
from ddseg_extractor.errors import (
    ExtractorError,
    ImageFormatError,
    ManifestError,
    ModelLoadError,
    StageError,
)
from ddseg_extractor.image_io import load_image_rgb, write_guide_ppm
from ddseg_extractor.tensor_io import write_tensor

KNOWN_BLOCKS = ("down0", "down1", "up0", "up1", "up2")
DEFAULT_BLOCKS = ("up0", "up1")
DEFAULT_TEMPLATE = "a photo of a {}"


@dataclass(frozen=True)
class ExtractionManifest:
    """What to extract from one image and where to put it.

    ``attention_resolution`` is the block grid edge; None means match
    the short side of the patch grid.  ``time_step`` selects the
    denoising step, and the default of 0 keeps encoding noise-free so
    repeated runs are byte-identical.
    """

    image_path: str
    class_names: tuple[str, ...]
    output_dir: str
    blocks: tuple[str, ...] = DEFAULT_BLOCKS
    time_step: int = 0
    attention_resolution: int | None = None
    patch_size: int = 16
    prompt_template: str = DEFAULT_TEMPLATE
    seed: int = 0
    clip_name: str = "openai/clip-vit-base-patch16"
    denoiser_name: str = "stabilityai/stable-diffusion-2-base"

    def __post_init__(self):
        if not self.blocks:
            raise ManifestError("at least one attention block must be requested")
        for tag in self.blocks:
            if tag not in KNOWN_BLOCKS:
                raise ManifestError(f"unknown block {tag!r}, expected one of {KNOWN_BLOCKS}")
        if len(set(self.blocks)) != len(self.blocks):
            raise ManifestError(f"duplicate block in {self.blocks}")
        if not self.class_names:
            raise ManifestError("class name list is empty")
        for name in self.class_names:
            if not name or "\n" in name:
                raise ManifestError(f"bad class name {name!r}")
        if self.time_step < 0:
            raise ManifestError(f"time step must be >= 0, got {self.time_step}")
        if self.patch_size < 1:
            raise ManifestError(f"patch size must be >= 1, got {self.patch_size}")
        if self.attention_resolution is not None and self.attention_resolution < 1:
            raise ManifestError(
                f"attention resolution must be >= 1, got {self.attention_resolution}"
            )
        if "{}" not in self.prompt_template:
            raise ManifestError("prompt template needs a {} slot for the class name")

    def prompts(self) -> tuple[str, ...]:
        return tuple(self.prompt_template.format(name) for name in self.class_names)


@dataclass(frozen=True)
class ExtractionResult:
    """Paths and grid bookkeeping for one finished extraction."""

    directory: Path
    logits_path: Path
    attention_paths: dict[str, Path] = field(repr=False)
    guide_path: Path
    sidecar_path: Path
    classes_path: Path
    grid: tuple[int, int]
    block_grids: dict[str, tuple[int, int]]

    def output_paths(self) -> list[Path]:
        return [
            self.logits_path,
            *self.attention_paths.values(),
            self.guide_path,
            self.sidecar_path,
            self.classes_path,
        ]


def _check_output(out: BackboneOutput, manifest: ExtractionManifest) -> None:
    # postconditions every backbone must satisfy, checked before writing
    n = out.grid[0] * out.grid[1]
    if out.logits.shape != (n, len(manifest.class_names)):
        raise ExtractorError(
            f"backbone logits shape {out.logits.shape}, expected ({n}, "
            f"{len(manifest.class_names)})"
        )
    if set(out.attentions) != set(manifest.blocks):
        raise ExtractorError(
            f"backbone produced blocks {sorted(out.attentions)}, "
            f"requested {sorted(manifest.blocks)}"
        )
    for tag, attn in out.attentions.items():
        gh, gw = out.block_grids[tag]
        if attn.ndim != 3 or attn.shape[1] != gh * gw or attn.shape[2] != gh * gw:
            raise ExtractorError(f"block {tag} attention shape {attn.shape} off grid {gh}x{gw}")
        if attn.min() < 0:
            raise ExtractorError(f"block {tag} attention has negative entries")


def extract(manifest: ExtractionManifest, backbone=None) -> ExtractionResult:
    """Run one backbone pass and write the engine input set."""
    if backbone is None:
        backbone = StatsBackbone(manifest.seed)

    try:
        image = load_image_rgb(manifest.image_path)
        p = manifest.patch_size
        h, w = image.shape[0] // p, image.shape[1] // p
        if h < 1 or w < 1:
            raise ImageFormatError(
                f"{manifest.image_path}: image {image.shape[1]}x{image.shape[0]} "
                f"is smaller than one {p}px patch"
            )
        cropped = image[: h * p, : w * p]
        out_dir = Path(manifest.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if not out_dir.is_dir() or not os.access(out_dir, os.W_OK):
            raise ManifestError(f"{out_dir}: output directory is not writable")
    except StageError:
        raise
    except ExtractorError as exc:
        raise StageError("load-inputs", str(exc)) from exc
    except OSError as exc:
        raise StageError("load-inputs", str(exc)) from exc

    try:
        output = backbone.run(cropped, manifest)
        _check_output(output, manifest)
    except ModelLoadError as exc:
        raise StageError("load-models", str(exc)) from exc
    except ExtractorError as exc:
        raise StageError("extract", str(exc)) from exc

    try:
        logits_path = out_dir / "logits.ddt1"
        write_tensor(output.logits.astype(np.float32), logits_path)
        attention_paths = {}
        for tag in manifest.blocks:
            path = out_dir / f"attn_{tag}.ddt1"
            write_tensor(output.attentions[tag].astype(np.float32), path)
            attention_paths[tag] = path
        guide_path = out_dir / "guide.ppm"
        write_guide_ppm(cropped, guide_path)
        classes_path = out_dir / "classes.txt"
        classes_path.write_text(
            "".join(f"{name}\n" for name in manifest.class_names), encoding="utf-8"
        )
        sidecar_path = out_dir / "sidecar.json"
        sidecar = {
            "grid": list(output.grid),
            "blocks": {tag: list(output.block_grids[tag]) for tag in manifest.blocks},
            "class_names": list(manifest.class_names),
        }
        sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    except (ExtractorError, OSError) as exc:
        raise StageError("write-outputs", str(exc)) from exc

    return ExtractionResult(
        directory=out_dir,
        logits_path=logits_path,
        attention_paths=attention_paths,
        guide_path=guide_path,
        sidecar_path=sidecar_path,
        classes_path=classes_path,
        grid=output.grid,
        block_grids=dict(output.block_grids),
    )
