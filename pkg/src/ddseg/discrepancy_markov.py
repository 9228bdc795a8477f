"""Maximum-velocity discrepancy via Markov-chain convergence.

The fused attention is balanced into a doubly stochastic transition
matrix with iterative proportional fitting, each class distribution is
propagated through the chain, and every patch records the first step at
which its probability stops moving (variation at or below tau).  The
velocity of a patch is the reciprocal of that step count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ddseg.errors import NumericalError, ParameterError, ShapeError
from ddseg.logits_prep import ClassDistribution

DEFAULT_TAU = 0.3
DEFAULT_MAX_STEPS = 1000
DEFAULT_IPF_ITERATIONS = 15
POSITIVITY_FLOOR = 1e-12

VARIATION_SCALES = ("raw", "times_n")


@dataclass(frozen=True)
class TransitionMatrix:
    """Doubly stochastic (within tolerance) strictly positive matrix."""

    t: np.ndarray
    ipf_iterations_used: int
    row_residual: float
    col_residual: float

    @property
    def n(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class VelocityConfig:
    tau: float = DEFAULT_TAU
    max_steps: int = DEFAULT_MAX_STEPS
    ipf_iterations: int = DEFAULT_IPF_ITERATIONS
    variation_scale: str = "times_n"

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError("tau must be positive")
        if self.max_steps < 1:
            raise ParameterError("max_steps must be >= 1")
        if self.ipf_iterations < 1:
            raise ParameterError("ipf_iterations must be >= 1")
        if self.variation_scale not in VARIATION_SCALES:
            raise ParameterError(
                f"variation_scale must be one of {VARIATION_SCALES}"
            )


def ipf_balance(candidate: np.ndarray, iterations: int = DEFAULT_IPF_ITERATIONS) -> TransitionMatrix:
    """Drive a nonnegative square matrix toward doubly stochastic form.

    Entries are floored at 1e-12 first so the matrix is strictly
    positive (hence irreducible and aperiodic).  Each iteration divides
    by column sums, then by row sums, matching the half-step update
    order of the balancing recursion.
    """
    t = np.asarray(candidate, dtype=np.float64)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ShapeError(f"transition candidate must be square, got {t.shape}")
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    t = np.maximum(t, POSITIVITY_FLOOR)
    for _ in range(iterations):
        t = t / t.sum(axis=0, keepdims=True)
        t = t / t.sum(axis=1, keepdims=True)
    if np.isnan(t).any():
        raise NumericalError("NaN during IPF balancing")
    return TransitionMatrix(
        t=t,
        ipf_iterations_used=iterations,
        row_residual=float(np.abs(t.sum(axis=1) - 1.0).max()),
        col_residual=float(np.abs(t.sum(axis=0) - 1.0).max()),
    )


def markov_propagate(
    f0: ClassDistribution, t: TransitionMatrix, steps: int
) -> np.ndarray:
    """Iterates f^(1..steps) of f^(l) = f^(l-1) T, stacked as rows."""
    if f0.probs.shape[0] != t.n:
        raise ShapeError("distribution and transition matrix disagree on N")
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    out = np.empty((steps, t.n))
    f = f0.probs
    for l in range(steps):
        f = f @ t.t
        out[l] = f
    return out


def convergence_steps(
    f0: ClassDistribution, t: TransitionMatrix, cfg: VelocityConfig
) -> np.ndarray:
    """First step l at which each patch's variation falls to tau or below.

    Variation of patch i at step l is |f_i^(l) - f_i^(l-1)|, multiplied
    by N under the "times_n" scale.  Patches still moving at max_steps
    are assigned max_steps.  Propagation stops early once every patch
    has converged.
    """
    if f0.probs.shape[0] != t.n:
        raise ShapeError("distribution and transition matrix disagree on N")
    scale = float(t.n) if cfg.variation_scale == "times_n" else 1.0
    steps = np.zeros(t.n, dtype=np.int64)
    prev = f0.probs
    for l in range(1, cfg.max_steps + 1):
        cur = prev @ t.t
        hit = (steps == 0) & (scale * np.abs(cur - prev) <= cfg.tau)
        steps[hit] = l
        if (steps > 0).all():
            return steps
        prev = cur
    steps[steps == 0] = cfg.max_steps
    return steps


def convergence_velocity(
    f0: ClassDistribution, t: TransitionMatrix, cfg: VelocityConfig
) -> np.ndarray:
    """Per-patch velocity v = 1 / convergence step, in (0, 1]."""
    return 1.0 / convergence_steps(f0, t, cfg)
