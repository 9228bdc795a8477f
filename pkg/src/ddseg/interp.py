"""Bilinear resampling helpers shared by attention fusion and upsampling.

All coordinate mapping uses the align-corners-false convention: output
index ``j`` on an axis of size ``n_dst`` samples the source at
``(j + 0.5) * n_src / n_dst - 0.5``.
"""

from __future__ import annotations

import numpy as np


def source_positions(n_src: int, n_dst: int) -> np.ndarray:
    """Continuous (unclamped) source coordinates for each output index."""
    j = np.arange(n_dst, dtype=np.float64)
    return (j + 0.5) * (n_src / n_dst) - 0.5


def linear_weights(n_src: int, n_dst: int):
    """Per-output (left index, right index, right weight) on one axis.

    Positions are clamped to [0, n_src-1] before splitting, so edge
    samples are repeated rather than extrapolated.  When n_src == n_dst
    the mapping is the exact identity (right weight 0 everywhere).
    """
    x = np.clip(source_positions(n_src, n_dst), 0.0, n_src - 1.0)
    i0 = np.floor(x).astype(np.int64)
    i0 = np.minimum(i0, n_src - 1)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, x - i0


def resize_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """Dense (n_dst, n_src) matrix applying 1-D linear resampling."""
    i0, i1, w1 = linear_weights(n_src, n_dst)
    m = np.zeros((n_dst, n_src))
    rows = np.arange(n_dst)
    # i0 == i1 at clamped edges; add so the weights still sum to 1
    np.add.at(m, (rows, i0), 1.0 - w1)
    np.add.at(m, (rows, i1), w1)
    return m


def bilinear_resize(img: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Separable bilinear resize of a (h, w) or (h, w, c) array."""
    h, w = img.shape[:2]
    mh = resize_matrix(h, out_hw[0])
    mw = resize_matrix(w, out_hw[1])
    out = np.tensordot(mh, img, axes=(1, 0))
    out = np.tensordot(mw, out, axes=(1, 1))
    return np.swapaxes(out, 0, 1)


def bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample (h, w) or (h, w, c) at continuous positions, edge-clamped.

    Uses the incremental expansion a + wy*(b-a) + ... so sampling a
    constant image returns that constant bit-exactly.
    """
    h, w = img.shape[:2]
    y = np.clip(ys, 0.0, h - 1.0)
    x = np.clip(xs, 0.0, w - 1.0)
    y0 = np.minimum(np.floor(y).astype(np.int64), h - 1)
    x0 = np.minimum(np.floor(x).astype(np.int64), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = y - y0
    wx = x - x0
    if img.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]
    a = img[y0, x0]
    b = img[y1, x0]
    c = img[y0, x1]
    d = img[y1, x1]
    return a + wy * (b - a) + wx * (c - a) + wy * wx * (d - c - (b - a))
