"""Fusing per-block self-attention into one patch-pair matrix.

Each block carries H_b head maps of shape N_b x N_b over its own patch
grid.  Heads are averaged uniformly, both axes are bilinearly resized to
the working grid, and blocks are summed with their weights renormalized
to 1.  The result serves as the transport cost candidate and, after
balancing, as the Markov transition candidate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ddseg.errors import ParameterError, ShapeError
from ddseg.interp import resize_matrix

# block tag -> default weight; the two mid up-blocks carry everything
DEFAULT_BLOCK_WEIGHTS = {
    "down0": 0.0,
    "down1": 0.0,
    "up0": 0.5,
    "up1": 0.5,
    "up2": 0.0,
}


@dataclass(frozen=True)
class AttentionBlock:
    """One block's head maps (H_b, N_b, N_b) on grid (h_b, w_b)."""

    tag: str
    maps: np.ndarray
    grid: tuple[int, int]
    weight: float

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.float64)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "grid", (int(self.grid[0]), int(self.grid[1])))
        if maps.ndim != 3 or maps.shape[1] != maps.shape[2]:
            raise ShapeError(f"block {self.tag}: maps must be (H, N, N), got {maps.shape}")
        h, w = self.grid
        if h * w != maps.shape[1]:
            raise ShapeError(f"block {self.tag}: grid {h}x{w} != {maps.shape[1]} patches")
        if (maps < 0).any():
            raise ParameterError(f"block {self.tag}: attention must be nonnegative")
        if self.weight < 0:
            raise ParameterError(f"block {self.tag}: weight must be >= 0")


@dataclass(frozen=True)
class AttentionStack:
    blocks: tuple[AttentionBlock, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ParameterError("attention stack is empty")
        if not any(b.weight > 0 for b in self.blocks):
            raise ParameterError("at least one block weight must be positive")


@dataclass(frozen=True)
class CostMatrix:
    """Nonnegative finite N x N matrix over the working patch grid."""

    c: np.ndarray
    grid: tuple[int, int]

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "grid", (int(self.grid[0]), int(self.grid[1])))
        h, w = self.grid
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] != h * w:
            raise ShapeError(f"cost shape {c.shape} does not match grid {h}x{w}")
        if not np.isfinite(c).all():
            raise ParameterError("cost entries must be finite")
        if (c < 0).any():
            raise ParameterError("cost entries must be nonnegative")


def resize_attention(
    amap: np.ndarray, grid_b: tuple[int, int], grid: tuple[int, int]
) -> np.ndarray:
    """Resample an N_b x N_b patch-pair map onto a new grid, axis by axis.

    Each axis indexes the flattened (h_b, w_b) spatial field, so the map
    is viewed as a 4-D tensor and both spatial pairs are bilinearly
    resized.  Separable application keeps this O(N * N_b).
    """
    hb, wb = (int(g) for g in grid_b)
    h, w = (int(g) for g in grid)
    nb = hb * wb
    amap = np.asarray(amap, dtype=np.float64)
    if amap.shape != (nb, nb):
        raise ShapeError(f"attention {amap.shape} does not match grid {hb}x{wb}")
    if (hb, wb) == (h, w):
        return amap.copy()
    mr = resize_matrix(hb, h)
    mc = resize_matrix(wb, w)

    def resize_axis0(x: np.ndarray) -> np.ndarray:
        # (hb*wb, k) viewed as (hb, wb, k) -> (h, w, k) -> (h*w, k)
        t = x.reshape(hb, wb, -1)
        t = np.tensordot(mr, t, axes=(1, 0))
        t = np.tensordot(mc, t, axes=(1, 1)).swapaxes(0, 1)
        return t.reshape(h * w, -1)

    out = resize_axis0(amap)          # rows resampled
    out = resize_axis0(out.T).T       # columns resampled
    return out


def fuse_attention(stack: AttentionStack, grid: tuple[int, int]) -> CostMatrix:
    """Head-mean per block, resize to grid, weight-renormalized sum."""
    total = sum(b.weight for b in stack.blocks)
    if total <= 0:
        raise ParameterError("all block weights are zero")
    n = grid[0] * grid[1]
    fused = np.zeros((n, n))
    for block in stack.blocks:
        if block.weight == 0:
            continue
        mean_map = block.maps.mean(axis=0)
        fused += (block.weight / total) * resize_attention(mean_map, block.grid, grid)
    return CostMatrix(fused, grid)


def cost_from_attention(fused: CostMatrix, direction: str = "raw") -> CostMatrix:
    """Turn fused attention into a transport cost.

    "raw" uses the fused matrix directly, which makes the Gibbs kernel
    concentrate transport on weakly attending patch pairs and is the
    default.  "flip" maps min-max-normalized attention through 1 - x so
    strongly attending pairs become cheap; kept for comparison runs.
    """
    if direction == "raw":
        return fused
    if direction != "flip":
        raise ParameterError(f"unknown cost direction {direction!r}")
    lo = fused.c.min()
    hi = fused.c.max()
    if hi - lo < 1e-12:
        # constant attention carries no structure; all-equal cost
        return CostMatrix(np.zeros_like(fused.c), fused.grid)
    return CostMatrix(1.0 - (fused.c - lo) / (hi - lo), fused.grid)
