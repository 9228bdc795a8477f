"""Pointwise KL discrepancy baseline.

The per-patch summand of KL(f^c || uniform) is
k_i = f_i * ln(N * f_i), with the 0 * ln 0 limit taken as 0.  Summed
over patches it is a true KL divergence (nonnegative, zero only at the
uniform distribution); per patch it grows with f_i, so the class whose
distribution concentrates most on a patch wins the argmax.
"""

from __future__ import annotations

import numpy as np

from ddseg.errors import ParameterError, ShapeError
from ddseg.logits_prep import ClassDistribution, DegenerateTarget

KL_DIRECTIONS = ("q_to_s", "s_to_q")


def kl_pointwise_map(
    f_c: ClassDistribution, target: DegenerateTarget, direction: str = "q_to_s"
) -> np.ndarray:
    """Length-N vector of per-patch KL summands.

    "q_to_s" is the default described above.  "s_to_q" gives the
    reverse summand (1/N) * ln((1/N) / f_i), which ranks patches the
    opposite way; it is kept behind a flag for comparison and clamps
    f_i at 1e-30 to stay finite on masked patches.
    """
    f = f_c.probs
    n = target.n
    if f.shape[0] != n:
        raise ShapeError("distribution and target disagree on N")
    if direction == "q_to_s":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = f * np.log(n * f)
        return np.where(f > 0, terms, 0.0)
    if direction == "s_to_q":
        u = 1.0 / n
        return u * np.log(u / np.maximum(f, 1e-30))
    raise ParameterError(f"unknown KL direction {direction!r}")
