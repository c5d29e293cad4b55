"""Evaluation metrics: rank correlation and absolute/squared error."""

from __future__ import annotations

import numpy as np


class ConstantInputError(ValueError):
    """Correlation is undefined when one side has zero rank variance."""


def _check_pair(p, q, min_len: int):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 1 or q.ndim != 1:
        raise ValueError("metric inputs must be rank-1 sequences")
    if len(p) != len(q):
        raise ValueError(f"length mismatch: {len(p)} vs {len(q)}")
    if len(p) < min_len:
        raise ValueError(f"need at least {min_len} values, got {len(p)}")
    return p, q


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rho(p, q) -> float:
    """Pearson correlation of average-rank vectors, in [-1, 1].

    Raises ConstantInputError when either argument is all-constant, so a
    degenerate predictor cannot masquerade as zero correlation.
    """
    p, q = _check_pair(p, q, min_len=2)
    rp, rq = average_ranks(p), average_ranks(q)
    cp = rp - rp.mean()
    cq = rq - rq.mean()
    vp = float(cp @ cp)
    vq = float(cq @ cq)
    if vp == 0.0 or vq == 0.0:
        side = "first" if vp == 0.0 else "second"
        raise ConstantInputError(f"spearman_rho undefined: {side} argument is all-constant")
    return float(cp @ cq) / np.sqrt(vp * vq)


def mae(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth, min_len=1)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth) -> float:
    pred, truth = _check_pair(pred, truth, min_len=1)
    d = pred - truth
    return float(np.sqrt(np.mean(d * d)))
