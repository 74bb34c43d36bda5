"""Reference fusers: majority vote, union, intersection and binary STAPLE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criterion import DEFAULT_EPS, QualityParams
from .grid import BinaryMask, ShapeSet


def majority_vote(s: ShapeSet) -> BinaryMask:
    """Pixels covered by at least half of the inputs (ties count as foreground)."""
    k = s.stack.sum(axis=0, dtype=np.int64)
    return BinaryMask(s.grid, 2 * k >= s.n)


def union(s: ShapeSet) -> BinaryMask:
    return BinaryMask(s.grid, s.stack.any(axis=0))


def intersection(s: ShapeSet) -> BinaryMask:
    return BinaryMask(s.grid, s.stack.all(axis=0))


@dataclass(frozen=True, eq=False)
class StapleResult:
    posterior: np.ndarray
    quality: QualityParams
    prior: float
    iterations: int
    converged: bool
    ambiguous: bool

    @property
    def consensus(self) -> BinaryMask:
        return BinaryMask.from_array(self.posterior >= 0.5)


def staple_em(s: ShapeSet, max_em_iters: int = 100, tol: float = 1e-8, init: float = 0.99,
              eps: float = DEFAULT_EPS) -> StapleResult:
    """Binary STAPLE: EM over per-input sensitivity/specificity.

    The E-step is the posterior of the hidden label under a scalar prior
    (the mean foreground fraction of the inputs); the M-step sets ``p``/``q``
    to posterior-weighted agreement rates. No spatial regularisation.

    ``ambiguous`` is set when some pixel's posterior sits exactly at 1/2,
    e.g. for two complementary inputs, where the consensus is arbitrary.
    """
    if s.n < 2:
        raise ValueError("STAPLE needs at least two inputs")
    d = s.stack.reshape(s.n, -1).astype(np.float64)
    prior = float(np.clip(d.mean(), eps, 1.0 - eps))
    p = np.full(s.n, init)
    q = np.full(s.n, init)
    w = np.full(d.shape[1], prior)
    converged = False
    it = 0
    for it in range(1, max_em_iters + 1):
        lp, l1p = np.log(p)[:, None], np.log1p(-p)[:, None]
        lq, l1q = np.log(q)[:, None], np.log1p(-q)[:, None]
        log_a = np.log(prior) + (d * lp + (1 - d) * l1p).sum(axis=0)
        log_b = np.log1p(-prior) + ((1 - d) * lq + d * l1q).sum(axis=0)
        w = 1.0 / (1.0 + np.exp(np.clip(log_b - log_a, -700, 700)))
        sw, sw0 = w.sum(), (1 - w).sum()
        p_new = (d * w).sum(axis=1) / sw if sw > 0 else p
        q_new = ((1 - d) * (1 - w)).sum(axis=1) / sw0 if sw0 > 0 else q
        p_new = np.clip(p_new, eps, 1 - eps)
        q_new = np.clip(q_new, eps, 1 - eps)
        change = max(np.max(np.abs(p_new - p)), np.max(np.abs(q_new - q)))
        p, q = p_new, q_new
        if change < tol:
            converged = True
            break
    ambiguous = bool(np.any(np.abs(w - 0.5) < 1e-9))
    return StapleResult(w.reshape(s.grid.shape), QualityParams(p, q, eps), prior, it, converged, ambiguous)
