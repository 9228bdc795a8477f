"""Optimal-path discrepancy via entropic optimal transport.

For each candidate class the normalized patch distribution f^c is
transported toward the uniform target through the Gibbs kernel
K = exp(-C / epsilon).  A fixed number of alternating Sinkhorn scaling
updates yields the plan pi = diag(mu) K diag(nu); the per-patch path
value is the cost-weighted transported mass arriving at each patch,
q_j = sum_i pi_ij C_ij, normalized into a distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ddseg.attention_fusion import CostMatrix
from ddseg.errors import NumericalError, ParameterError, ShapeError
from ddseg.logits_prep import ClassDistribution, DegenerateTarget, softmax

DEFAULT_EPSILON = 0.1
DEFAULT_ITERATIONS = 50
DEFAULT_UNDERFLOW_FLOOR = 1e-30


@dataclass(frozen=True)
class SinkhornConfig:
    epsilon: float = DEFAULT_EPSILON
    iterations: int = DEFAULT_ITERATIONS
    underflow_floor: float = DEFAULT_UNDERFLOW_FLOOR

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ParameterError("epsilon must be positive")
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if self.underflow_floor <= 0:
            raise ParameterError("underflow floor must be positive")


@dataclass(frozen=True)
class TransportPlan:
    """Sinkhorn output: plan, scalings, kernel, and solve diagnostics."""

    pi: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    kernel: np.ndarray = field(repr=False)
    numerical_warning: bool = False
    row_marginal_error: float = float("nan")
    col_marginal_error: float = float("nan")


def gibbs_kernel(
    cost: CostMatrix, epsilon: float, floor: float = DEFAULT_UNDERFLOW_FLOOR
) -> np.ndarray:
    """K = exp(-C / epsilon), entries floored to keep them positive.

    With nonnegative cost every entry lies in (0, 1]; extreme costs that
    underflow toward 0 are clamped at ``floor`` so later divisions stay
    finite.
    """
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    return np.maximum(np.exp(-cost.c / epsilon), floor)


def sinkhorn_solve(
    f_c: ClassDistribution,
    target: DegenerateTarget,
    kernel: np.ndarray,
    cfg: SinkhornConfig,
) -> TransportPlan:
    """Alternating scaling updates from nu = 1_N, fixed iteration count.

    mu <- f^c / (K nu), then nu <- f^t / (K^T mu), repeated
    cfg.iterations times.  Patches with zero mass in f^c keep mu_i = 0,
    so their plan rows transport nothing.  Denominators below the
    underflow floor are clamped and flagged on the returned plan; NaN
    anywhere is a hard error.
    """
    f = f_c.probs
    n = f.shape[0]
    if kernel.shape != (n, n):
        raise ShapeError(f"kernel {kernel.shape} does not match {n} patches")
    if target.n != n:
        raise ShapeError("target size differs from f^c")
    ft = target.vector()
    alive = f > 0
    floor = cfg.underflow_floor
    warned = False
    nu = np.ones(n)
    mu = np.zeros(n)
    for _ in range(cfg.iterations):
        denom = kernel @ nu
        if (denom[alive] < floor).any():
            warned = True
            denom = np.maximum(denom, floor)
        mu = np.where(alive, f / denom, 0.0)
        denom = kernel.T @ mu
        if (denom < floor).any():
            warned = True
            denom = np.maximum(denom, floor)
        nu = ft / denom
    pi = mu[:, None] * kernel * nu[None, :]
    if np.isnan(pi).any() or np.isnan(mu).any() or np.isnan(nu).any():
        raise NumericalError("NaN in Sinkhorn iterates")
    return TransportPlan(
        pi=pi,
        mu=mu,
        nu=nu,
        kernel=kernel,
        numerical_warning=warned,
        row_marginal_error=float(np.abs(pi.sum(axis=1) - f).max()),
        col_marginal_error=float(np.abs(pi.sum(axis=0) - ft).max()),
    )


def path_map(plan: TransportPlan, cost: CostMatrix, norm: str = "softmax") -> np.ndarray:
    """Per-patch path vector p^c from the plan.

    q_j = sum_i pi_ij C_ij; "softmax" normalizes q through a softmax,
    "sum" divides by the total (falling back to uniform when the total
    vanishes, e.g. for an all-zero cost).
    """
    if plan.pi.shape != cost.c.shape:
        raise ShapeError("plan and cost disagree on N")
    q = np.einsum("ij,ij->j", plan.pi, cost.c)
    if norm == "softmax":
        return softmax(q)
    if norm == "sum":
        total = q.sum()
        if total <= 1e-300:
            return np.full(q.shape[0], 1.0 / q.shape[0])
        return q / total
    raise ParameterError(f"unknown path normalization {norm!r}")
