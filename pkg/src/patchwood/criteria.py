"""Impurity criteria and the incremental node statistics behind split search.

All statistics are weighted: integer sample counts are the special case of
unit weights, and bootstrap resampling enters the tree builder as integer
multiplicity weights rather than duplicated rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log2

import numpy as np

CRITERIA = ("gini", "entropy", "mse")

#: impurity decreases below this are treated as zero (stopping rule and
#: importance accounting); negative values from cancellation are clamped.
DECREASE_EPS = 1e-12

_SHIFT_TOL = 1e-9


class CriterionError(ValueError):
    pass


@dataclass
class ClassStats:
    """Weighted per-class counts of a node's samples."""

    counts: np.ndarray
    total: float

    @classmethod
    def from_arrays(cls, y, w, n_classes: int) -> "ClassStats":
        if len(y) <= 48:  # numpy call overhead dominates tiny nodes
            acc = [0.0] * n_classes
            total = 0.0
            for yi, wi in zip(y.tolist(), w.tolist()):
                acc[yi] += wi
                total += wi
            return cls(counts=np.array(acc), total=total)
        counts = np.bincount(y, weights=w, minlength=n_classes).astype(float)
        return cls(counts=counts, total=float(counts.sum()))

    @classmethod
    def zeros(cls, n_classes: int) -> "ClassStats":
        return cls(counts=np.zeros(n_classes), total=0.0)

    def copy(self) -> "ClassStats":
        return ClassStats(counts=self.counts.copy(), total=self.total)


@dataclass
class RegressionStats:
    """Weighted count, sum and sum of squares of a node's outputs."""

    sum: float = 0.0
    sum_sq: float = 0.0
    total: float = 0.0

    @classmethod
    def from_arrays(cls, y, w) -> "RegressionStats":
        return cls(
            sum=float(np.dot(w, y)),
            sum_sq=float(np.dot(w, y * y)),
            total=float(np.sum(w)),
        )

    @classmethod
    def zeros(cls) -> "RegressionStats":
        return cls()

    def copy(self) -> "RegressionStats":
        return RegressionStats(sum=self.sum, sum_sq=self.sum_sq, total=self.total)


def gini(stats: ClassStats) -> float:
    """Gini index sum_k p_k (1 - p_k); in [0, 1 - 1/J]."""
    if stats.total <= 0:
        raise CriterionError("gini of an empty node is undefined")
    if len(stats.counts) <= 64:
        sq = 0.0
        for c in stats.counts.tolist():
            sq += c * c
        return max(0.0, 1.0 - sq / (stats.total * stats.total))
    p = stats.counts / stats.total
    return max(0.0, float(1.0 - np.dot(p, p)))


def entropy(stats: ClassStats) -> float:
    """Shannon entropy -sum_k p_k log2 p_k in bits; 0 log 0 == 0."""
    if stats.total <= 0:
        raise CriterionError("entropy of an empty node is undefined")
    if len(stats.counts) <= 64:
        h = 0.0
        for c in stats.counts.tolist():
            if c > 0.0:
                p = c / stats.total
                h -= p * log2(p)
        return max(0.0, h)
    p = stats.counts[stats.counts > 0] / stats.total
    return max(0.0, float(-np.dot(p, np.log2(p))))


def mse(stats: RegressionStats) -> float:
    """Within-node variance of y, clamped at 0 against rounding."""
    if stats.total <= 0:
        raise CriterionError("mse of an empty node is undefined")
    mean = stats.sum / stats.total
    return max(0.0, stats.sum_sq / stats.total - mean * mean)


def node_impurity(stats, criterion: str) -> float:
    if criterion == "gini":
        return gini(stats)
    if criterion == "entropy":
        return entropy(stats)
    if criterion == "mse":
        return mse(stats)
    raise CriterionError(f"unknown criterion {criterion!r}")


def impurity_decrease(parent_impurity: float, parent_total: float,
                      left, right, criterion: str) -> float:
    """i(t) - p_L i(t_L) - p_R i(t_R); nonnegative for concave criteria."""
    if left.total <= 0 or right.total <= 0:
        raise CriterionError("impurity decrease requires two nonempty children")
    p_left = left.total / parent_total
    p_right = right.total / parent_total
    decrease = (parent_impurity
                - p_left * node_impurity(left, criterion)
                - p_right * node_impurity(right, criterion))
    return decrease


def shift_left(left, right, *batch):
    """Move a batch of samples from the right stats to the left stats.

    For classification pass ``(y, w)`` arrays, for regression ``(y, w)``
    as well; both stats are updated in place and returned.  Totals are
    conserved exactly up to float addition.
    """
    y, w = batch
    if isinstance(left, ClassStats):
        moved = np.bincount(y, weights=w, minlength=len(left.counts))
        if np.any(right.counts - moved < -_SHIFT_TOL):
            raise CriterionError("shift_left would drive a right count negative")
        left.counts += moved
        right.counts -= moved
        moved_total = float(moved.sum())
    else:
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        moved_total = float(np.sum(w))
        if right.total - moved_total < -_SHIFT_TOL:
            raise CriterionError("shift_left would drive the right total negative")
        s = float(np.dot(w, y))
        s2 = float(np.dot(w, y * y))
        left.sum += s
        left.sum_sq += s2
        right.sum -= s
        right.sum_sq -= s2
    left.total += moved_total
    right.total -= moved_total
    return left, right


# Vectorized impurity evaluation over many candidate splits at once.  The
# split search uses these on cumulative statistics; they are the array form
# of the incremental update equations implemented by shift_left.

def impurity_from_count_matrix(counts: np.ndarray, totals: np.ndarray,
                               criterion: str) -> np.ndarray:
    """Impurity per row of a (n_candidates, J) weighted count matrix."""
    safe = np.where(totals > 0, totals, 1.0)
    p = counts / safe[:, None]
    if criterion == "gini":
        out = 1.0 - np.einsum("ij,ij->i", p, p)
    elif criterion == "entropy":
        plogp = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
        out = -plogp.sum(axis=1)
    else:
        raise CriterionError(f"{criterion!r} is not a classification criterion")
    return np.maximum(out, 0.0)


def mse_from_moments(sums: np.ndarray, sum_sqs: np.ndarray,
                     totals: np.ndarray) -> np.ndarray:
    safe = np.where(totals > 0, totals, 1.0)
    mean = sums / safe
    return np.maximum(sum_sqs / safe - mean * mean, 0.0)
