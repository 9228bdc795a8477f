"""Command-line interface.

Example:

    ddseg-extract --image photo.png --classes classes.txt --out features/

writes features/logits.ddt1, features/attn_up0.ddt1,
features/attn_up1.ddt1, features/guide.ppm, features/classes.txt and
features/sidecar.json, ready to feed straight into the engine:

    ddseg --mode ot --logits features/logits.ddt1 \\
        --attn up0:features/attn_up0.ddt1 --attn up1:features/attn_up1.ddt1 \\
        --classes features/classes.txt --guide features/guide.ppm \\
        --out features/run
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ddseg_extractor.backbone import make_backbone
from ddseg_extractor.errors import ExtractorError, StageError
from ddseg_extractor.extract import (
    DEFAULT_BLOCKS,
    DEFAULT_TEMPLATE,
    KNOWN_BLOCKS,
    ExtractionManifest,
    extract,
)


def read_class_names(path) -> tuple[str, ...]:
    """One class name per line; blank lines are skipped."""
    p = Path(path)
    if not p.is_file():
        raise StageError("load-inputs", f"{path}: no such class list")
    names = tuple(
        line.strip() for line in p.read_text(encoding="utf-8").splitlines() if line.strip()
    )
    if not names:
        raise StageError("load-inputs", f"{path}: class list is empty")
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ddseg-extract",
        description="Export patch logits, block self-attention tensors, a guide "
        "image, and a grid sidecar for one image.",
    )
    p.add_argument("--image", required=True, help="input image (any PIL-readable format)")
    p.add_argument("--classes", required=True, help="text file with one class name per line")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--block",
        action="append",
        choices=KNOWN_BLOCKS,
        help=f"attention block to capture, repeatable (default: {' '.join(DEFAULT_BLOCKS)})",
    )
    p.add_argument("--patch", type=int, default=16, help="patch edge in pixels")
    p.add_argument(
        "--attn-res",
        type=int,
        default=None,
        help="attention grid edge (default: short side of the patch grid)",
    )
    p.add_argument("--time-step", type=int, default=0, help="denoising time step")
    p.add_argument("--seed", type=int, default=0, help="seed for the stats backbone")
    p.add_argument(
        "--template",
        default=DEFAULT_TEMPLATE,
        help="prompt template with a {} slot for the class name",
    )
    p.add_argument(
        "--backbone",
        choices=("stats", "pretrained"),
        default="stats",
        help="stats: deterministic statistics encoder; pretrained: locally "
        "cached model weights",
    )
    p.add_argument("--clip-model", default="openai/clip-vit-base-patch16")
    p.add_argument("--denoiser-model", default="stabilityai/stable-diffusion-2-base")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = ExtractionManifest(
            image_path=args.image,
            class_names=read_class_names(args.classes),
            output_dir=args.out,
            blocks=tuple(args.block) if args.block else DEFAULT_BLOCKS,
            time_step=args.time_step,
            attention_resolution=args.attn_res,
            patch_size=args.patch,
            prompt_template=args.template,
            seed=args.seed,
            clip_name=args.clip_model,
            denoiser_name=args.denoiser_model,
        )
        result = extract(manifest, make_backbone(args.backbone, manifest))
    except ExtractorError as exc:
        print(f"ddseg-extract: {exc}", file=sys.stderr)
        return 2
    for path in result.output_paths():
        print(path)
    return 0
