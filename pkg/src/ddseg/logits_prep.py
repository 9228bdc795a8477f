"""Patch-class logits preparation.

Turns raw cosine-similarity logits into per-class patch distributions:
per-patch confidence softmax, category early rejection, confidence
masking, and per-class softmax normalization.  Masked patches carry
probability exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ddseg.errors import EmptyClassError, ParameterError, ShapeError

DEFAULT_NMS_THRESHOLD = 0.9


@dataclass(frozen=True)
class LogitsField:
    """Raw N x N_c patch-class logits on an (h, w) patch grid."""

    raw: np.ndarray
    grid: tuple[int, int]
    class_names: tuple[str, ...]

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "grid", (int(self.grid[0]), int(self.grid[1])))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        h, w = self.grid
        if raw.ndim != 2:
            raise ShapeError(f"logits must be 2-D, got shape {raw.shape}")
        n, n_c = raw.shape
        if h < 1 or w < 1 or h * w != n:
            raise ShapeError(f"grid {h}x{w} does not tile {n} patches")
        if n_c < 1 or n_c != len(self.class_names):
            raise ShapeError(
                f"{n_c} logit columns vs {len(self.class_names)} class names"
            )
        if np.isnan(raw).any():
            raise ParameterError("logits contain NaN")

    @property
    def n_patches(self) -> int:
        return self.raw.shape[0]

    @property
    def n_classes(self) -> int:
        return self.raw.shape[1]


@dataclass(frozen=True)
class ClassDistribution:
    """Normalized per-patch distribution f^c for one class."""

    class_index: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if p.ndim != 1:
            raise ShapeError("probs must be a vector")
        if (p < 0).any():
            raise ParameterError("probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ParameterError(f"probabilities sum to {p.sum()!r}, not 1")


@dataclass(frozen=True)
class DegenerateTarget:
    """The uniform target distribution over n patches."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("target needs at least one patch")

    @property
    def value(self) -> float:
        return 1.0 / self.n

    def vector(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically shifted softmax; -inf entries map to probability 0."""
    z = np.asarray(z, dtype=np.float64)
    zmax = np.max(z, axis=axis, keepdims=True)
    e = np.exp(z - zmax)
    return e / e.sum(axis=axis, keepdims=True)


def class_confidence(field: LogitsField) -> np.ndarray:
    """Per-patch softmax over classes; rows sum to 1."""
    return softmax(field.raw, axis=1)


def category_early_reject(field: LogitsField) -> list[int]:
    """Classes that win the per-patch confidence argmax at least once.

    Ties break toward the lower class index (argmax convention), so the
    result is deterministic.  Sorted ascending.
    """
    winners = np.argmax(class_confidence(field), axis=1)
    return sorted(int(c) for c in np.unique(winners))


def nms_mask(field: LogitsField, threshold: float = DEFAULT_NMS_THRESHOLD) -> np.ndarray:
    """Boolean keep-matrix: confidence >= threshold survives."""
    if not 0.0 <= threshold <= 1.0:
        raise ParameterError(f"nms threshold {threshold} outside [0, 1]")
    return class_confidence(field) >= threshold


def normalize_per_class(
    field: LogitsField, mask: np.ndarray, c: int
) -> ClassDistribution:
    """Softmax of class c's logits over patches, masked entries exactly 0.

    Raises EmptyClassError when no patch of class c survived the mask;
    callers drop such classes from the candidate set.
    """
    kept = np.asarray(mask, dtype=bool)[:, c]
    if not kept.any():
        raise EmptyClassError(f"class {c}: every patch masked")
    z = field.raw[kept, c]
    e = np.exp(z - z.max())
    probs = np.zeros(field.n_patches)
    probs[kept] = e / e.sum()
    return ClassDistribution(c, probs)


def read_class_list(path) -> tuple[str, ...]:
    """Class names from a UTF-8 text file, one per line, blanks skipped."""
    with open(path, encoding="utf-8") as fh:
        names = [line.strip() for line in fh]
    names = tuple(n for n in names if n)
    if not names:
        raise ParameterError(f"{path}: no class names")
    return names
