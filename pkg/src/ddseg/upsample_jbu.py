"""Joint bilateral upsampling of low-resolution maps.

Each high-resolution pixel p back-projects to a continuous low-res
position; surrounding low-res samples q are combined with the product
of a spatial Gaussian f(d) = exp(-d^2 / sigma_s^2) over low-res
distance and a range Gaussian g over the RGB distance between the
guide at p and the guide at q's own high-res center.  Weights are
normalized by their sum k_p; a vanishing k_p falls back to a plain
bilinear sample (counted, not fatal).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ddseg.errors import ParameterError, ShapeError
from ddseg.interp import bilinear_sample, source_positions

DEFAULT_SIGMA_S_SQ = 1.0
DEFAULT_SIGMA_R_SQ = 0.1
DEFAULT_WINDOW_RADIUS = 2
KERNEL_SUM_FLOOR = 1e-20


@dataclass(frozen=True)
class GuidanceImage:
    """Full-resolution RGB image with channels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        object.__setattr__(self, "pixels", px)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ShapeError(f"guide must be (H, W, 3), got {px.shape}")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ParameterError("guide channels must lie in [0, 1]")

    @property
    def dims(self) -> tuple[int, int]:
        return self.pixels.shape[0], self.pixels.shape[1]


@dataclass(frozen=True)
class JbuConfig:
    sigma_s_sq: float = DEFAULT_SIGMA_S_SQ
    sigma_r_sq: float = DEFAULT_SIGMA_R_SQ
    window_radius: int = DEFAULT_WINDOW_RADIUS

    def __post_init__(self):
        if self.sigma_s_sq <= 0 or self.sigma_r_sq <= 0:
            raise ParameterError("kernel variances must be positive")
        if self.window_radius < 1:
            raise ParameterError("window radius must be >= 1")


def _jbu_core(
    low: np.ndarray,
    guide: np.ndarray,
    sigma_s_sq: float,
    sigma_r_sq: float,
    radius: float,
):
    """Shared kernel; radius may be fractional here (tests exercise the
    single-sample limit below the public config's minimum of 1)."""
    h, w = low.shape
    hi_h, hi_w, _ = guide.shape
    ys = source_positions(h, hi_h)
    xs = source_positions(w, hi_w)

    # guide resampled at every low-res sample's high-res center
    gy = source_positions(hi_h, h)  # inverse mapping: low index -> high coord
    gx = source_positions(hi_w, w)
    guide_low = bilinear_sample(
        guide, np.repeat(gy, w).reshape(h, w), np.tile(gx, h).reshape(h, w)
    )

    base_y = np.floor(ys).astype(np.int64)
    base_x = np.floor(xs).astype(np.int64)
    reach = math.ceil(radius)
    offsets = range(-reach, reach + 2)

    # accumulate against a shifted origin so constant inputs come back
    # bit-exact after the divide
    origin = low[0, 0]
    shifted = low - origin
    acc = np.zeros((hi_h, hi_w))
    ksum = np.zeros((hi_h, hi_w))
    for dy in offsets:
        qy = base_y + dy
        ok_y = (np.abs(qy - ys) <= radius) & (qy >= 0) & (qy <= h - 1)
        if not ok_y.any():
            continue
        cy = np.clip(qy, 0, h - 1)
        wy = np.exp(-((qy - ys) ** 2) / sigma_s_sq)
        for dx in offsets:
            qx = base_x + dx
            ok_x = (np.abs(qx - xs) <= radius) & (qx >= 0) & (qx <= w - 1)
            if not ok_x.any():
                continue
            cx = np.clip(qx, 0, w - 1)
            wx = np.exp(-((qx - xs) ** 2) / sigma_s_sq)
            diff = guide - guide_low[cy[:, None], cx[None, :]]
            wr = np.exp(-(diff * diff).sum(axis=2) / sigma_r_sq)
            weight = (wy * ok_y)[:, None] * (wx * ok_x)[None, :] * wr
            acc += weight * shifted[cy[:, None], cx[None, :]]
            ksum += weight
    degenerate = ksum < KERNEL_SUM_FLOOR
    safe = np.where(degenerate, 1.0, ksum)
    out = origin + acc / safe
    fallback_count = int(degenerate.sum())
    if fallback_count:
        yy = np.repeat(ys, hi_w).reshape(hi_h, hi_w)
        xx = np.tile(xs, hi_h).reshape(hi_h, hi_w)
        out = np.where(degenerate, bilinear_sample(low, yy, xx), out)
    return out, fallback_count


def jbu_upsample(
    low: np.ndarray, guide: GuidanceImage, cfg: JbuConfig
) -> tuple[np.ndarray, int]:
    """Upsample ``low`` (h, w) to the guide's resolution.

    Returns the (H, W) map and the count of pixels that hit the
    bilinear fallback because their kernel sum vanished.
    """
    low = np.asarray(low, dtype=np.float64)
    if low.ndim != 2:
        raise ShapeError(f"low-res map must be 2-D, got {low.shape}")
    hi_h, hi_w = guide.dims
    if low.shape[0] > hi_h or low.shape[1] > hi_w:
        raise ParameterError(
            f"low map {low.shape} exceeds guide {guide.dims}; this is an upsampler"
        )
    return _jbu_core(
        low, guide.pixels, cfg.sigma_s_sq, cfg.sigma_r_sq, float(cfg.window_radius)
    )


def read_guide(path) -> GuidanceImage:
    """Load a guidance image from binary PPM (P6) or 8-bit PNG."""
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"P6":
        return GuidanceImage(_read_ppm(path))
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return GuidanceImage(arr / 255.0)


def _read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    fields = []
    pos = 2  # past magic
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParameterError(f"{path}: malformed PPM header")
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval < 1 or maxval > 65535:
        raise ParameterError(f"{path}: PPM maxval {maxval} out of range")
    count = width * height * 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    if len(blob) - pos < count * dtype.itemsize:
        raise ParameterError(f"{path}: PPM payload truncated")
    raw = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
    return raw.reshape(height, width, 3).astype(np.float64) / maxval
