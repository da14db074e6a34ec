"""Evaluation metrics for the experiment protocol.

AUC follows the Mann-Whitney convention: the probability that a random
positive outscores a random negative, with tied pairs counted 0.5.  The
implementation uses midranks but is contractually identical to the O(n^2)
pairwise sum (the test suite checks this against a brute-force oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import MetricError


@dataclass(frozen=True)
class EvalResult:
    auc: float
    n_pos: int
    n_neg: int
    accuracy_at_half: float


def _midranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    n = scores.size
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Rank-based AUC; raises MetricError unless both classes are present."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.size != y.size:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC undefined: need at least one positive and one negative")
    ranks = _midranks(s)
    # Sum of positive midranks minus its minimum possible value counts
    # wins + 0.5 * ties over all pos/neg pairs.
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(scores, labels) -> EvalResult:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    acc = float(np.mean((s >= 0.5) == (y == 1)))
    value = auc(s, y)
    n_pos = int((y == 1).sum())
    return EvalResult(auc=value, n_pos=n_pos, n_neg=int(y.size - n_pos), accuracy_at_half=acc)


def summarize(runs) -> tuple[float, float | None]:
    """Mean and sample standard deviation (n-1 denominator) of per-run AUC.

    Accepts EvalResults or bare floats; std is None for a single run.
    """
    values = [r.auc if isinstance(r, EvalResult) else float(r) for r in runs]
    if not values:
        raise ValueError("summarize needs at least one run")
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, None
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)
