"""Image loading and guide output."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ddseg_extractor.errors import ImageFormatError


def load_image_rgb(path) -> np.ndarray:
    """Read any PIL-supported image as an (H, W, 3) uint8 RGB array."""
    from PIL import Image, UnidentifiedImageError

    p = Path(path)
    if not p.is_file():
        raise ImageFormatError(f"{path}: no such image file")
    try:
        with Image.open(p) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"{path}: {exc}") from exc
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"{path}: decoded to shape {arr.shape}, want (H, W, 3)")
    return arr


def write_guide_ppm(pixels: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 array as a binary P6 PPM, maxval 255."""
    a = np.asarray(pixels)
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8:
        raise ImageFormatError(f"guide must be (H, W, 3) uint8, got {a.shape} {a.dtype}")
    h, w = a.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())
