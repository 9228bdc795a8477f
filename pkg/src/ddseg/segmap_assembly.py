"""Label-map assembly and image-format output.

Per-pixel argmax across candidate discrepancy maps, ties toward the
lowest original class index.  Labels always index the original class
list even when early rejection pruned candidates, so runs with
different candidate sets stay comparable.  Output formats: 16-bit
binary PGM (P5) for raw labels and optional palette-colorized binary
PPM (P6).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ddseg.errors import PaletteError, ParameterError, ShapeError


@dataclass(frozen=True)
class DiscrepancyMap:
    """One class's map, low-res (h, w) or upsampled (H, W)."""

    class_index: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ShapeError(f"map must be 2-D, got {v.shape}")
        if not np.isfinite(v).all():
            raise ParameterError(f"class {self.class_index}: non-finite map values")


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or not np.issubdtype(lab.dtype, np.integer):
            raise ShapeError("labels must be a 2-D integer array")
        object.__setattr__(self, "labels", lab.astype(np.int64))

    @property
    def dims(self) -> tuple[int, int]:
        return self.labels.shape


def assemble(maps: list[DiscrepancyMap]) -> LabelMap:
    """Pointwise argmax over candidate maps, reported in original indices."""
    if not maps:
        raise ParameterError("no candidate maps to assemble")
    ordered = sorted(maps, key=lambda m: m.class_index)
    shape = ordered[0].values.shape
    for m in ordered:
        if m.values.shape != shape:
            raise ShapeError(
                f"map for class {m.class_index} is {m.values.shape}, expected {shape}"
            )
    stack = np.stack([m.values for m in ordered])
    # argmax returns the first maximum; ascending class order makes ties
    # resolve toward the lowest original index
    winner = np.argmax(stack, axis=0)
    class_ids = np.array([m.class_index for m in ordered], dtype=np.int64)
    return LabelMap(class_ids[winner])


def write_label_map(m: LabelMap, path, palette=None) -> None:
    """Write 16-bit big-endian P5 at ``path``; with a palette, also a P6
    alongside it (same name, .ppm suffix)."""
    h, w = m.dims
    if m.labels.min() < 0 or m.labels.max() > 65535:
        raise ParameterError("labels must fit 16-bit PGM")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(m.labels.astype(">u2").tobytes())
    if palette is not None:
        if m.labels.max() >= len(palette):
            raise PaletteError(
                f"label {int(m.labels.max())} has no entry in a "
                f"{len(palette)}-color palette"
            )
        lut = np.asarray(palette, dtype=np.uint8)
        write_ppm(lut[m.labels], path.with_suffix(".ppm"))


def write_ppm(pixels: np.ndarray, path) -> None:
    """8-bit binary P6 writer."""
    px = np.asarray(pixels)
    if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
        raise ShapeError("PPM pixels must be (H, W, 3) uint8")
    h, w = px.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(px.tobytes())


def read_label_map(path) -> LabelMap:
    """Read back a P5 label map written by write_label_map."""
    with open(path, "rb") as fh:
        blob = fh.read()
    match = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if not match:
        raise ParameterError(f"{path}: not a P5 PGM")
    w, h, maxval = (int(g) for g in match.groups())
    if maxval != 65535:
        raise ParameterError(f"{path}: expected 16-bit PGM, maxval {maxval}")
    if len(blob) - match.end() < h * w * 2:
        raise ParameterError(f"{path}: PGM payload truncated")
    data = np.frombuffer(blob, dtype=">u2", offset=match.end(), count=h * w)
    return LabelMap(data.reshape(h, w).astype(np.int64))


def load_palette(path) -> list[tuple[int, int, int]]:
    """Palette file: one "name r g b" line per class (name may have spaces)."""
    colors = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.rsplit(None, 3)
            if len(parts) != 4:
                raise ParameterError(f"{path}:{line_no}: expected 'name r g b'")
            try:
                r, g, b = (int(p) for p in parts[1:])
            except ValueError as exc:
                raise ParameterError(f"{path}:{line_no}: non-integer channel") from exc
            if not all(0 <= v <= 255 for v in (r, g, b)):
                raise ParameterError(f"{path}:{line_no}: channel outside 0..255")
            colors.append((r, g, b))
    if not colors:
        raise ParameterError(f"{path}: empty palette")
    return colors


def default_palette(n: int) -> list[tuple[int, int, int]]:
    """Standard bit-interleaved segmentation palette (black, maroon,
    green, ... for indices 0, 1, 2, ...)."""
    colors = []
    for idx in range(n):
        r = g = b = 0
        v = idx
        for shift in range(8):
            r |= ((v >> 0) & 1) << (7 - shift)
            g |= ((v >> 1) & 1) << (7 - shift)
            b |= ((v >> 2) & 1) << (7 - shift)
            v >>= 3
        colors.append((r, g, b))
    return colors
