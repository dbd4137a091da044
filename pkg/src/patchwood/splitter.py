"""Split-search strategies over a node's samples.

All searches work on a NodeView: a [start, end) range of a shared sample
index buffer plus the set of features known constant along the branch.
Candidate thresholds for exact search are midpoints between consecutive
distinct sorted values; samples with x == threshold go left.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log2

import numpy as np

from .criteria import (
    ClassStats,
    RegressionStats,
    impurity_from_count_matrix,
    mse_from_moments,
    node_impurity,
)
from .dataset import CLASSIFICATION, Dataset

PERT_ATTEMPT_BUDGET = 32

SPLITTERS = ("best", "random-k", "ets", "pert", "trt-multiway")


class SplitterError(ValueError):
    pass


@dataclass
class BinarySplit:
    feature: int
    threshold: float
    decrease: float
    n_left: float
    n_right: float


@dataclass
class MultiwaySplit:
    feature: int
    arity: int
    decrease: float


@dataclass
class NodeView:
    """Window into the shared index buffer plus branch-level bookkeeping."""

    samples: np.ndarray
    start: int
    end: int
    constant: np.ndarray  # bool per feature; only grows from parent to child
    impurity: float
    stats: object  # ClassStats | RegressionStats
    y: np.ndarray | None = None  # targets/weights of the window, cached by the
    w: np.ndarray | None = None  # builder so K feature scans share one gather

    @property
    def indices(self) -> np.ndarray:
        return self.samples[self.start:self.end]

    @property
    def n(self) -> int:
        return self.end - self.start

    def targets_weights(self, ds: "Dataset"):
        if self.y is None:
            idx = self.indices
            self.y = ds.targets[idx]
            self.w = ds.weights[idx]
        return self.y, self.w


def node_stats(ds: Dataset, idx: np.ndarray):
    y = ds.targets[idx]
    w = ds.weights[idx]
    if ds.task == CLASSIFICATION:
        return ClassStats.from_arrays(y, w, ds.n_classes)
    return RegressionStats.from_arrays(y, w)


#: below this node size the scan runs in plain Python (numpy call overhead
#: dominates tiny nodes)
_SMALL_NODE = 48


def find_best_split_feature(ds: Dataset, node: NodeView, j: int, criterion: str,
                            min_weight_leaf: float = 0.0) -> BinarySplit | None:
    """Exact best split on ordered feature j (sort + linear scan)."""
    idx = node.indices
    xv = ds.features[j][idx]
    order = np.argsort(xv, kind="stable")
    xs = xv[order]
    if xs[0] == xs[-1]:
        node.constant[j] = True
        return None
    y_all, w_all = node.targets_weights(ds)
    ws = w_all[order]
    ys = y_all[order]
    if len(xs) <= _SMALL_NODE:
        return _scan_small(ds, node, j, xs, ys, ws, criterion, min_weight_leaf)

    # candidate split after sorted position i wherever the value changes
    bounds = np.nonzero(xs[:-1] < xs[1:])[0]
    total = node.stats.total

    if ds.task == CLASSIFICATION:
        onehot = np.zeros((len(xs), ds.n_classes))
        onehot[np.arange(len(xs)), ys] = ws
        left_counts = np.cumsum(onehot, axis=0)[bounds]
        left_tot = left_counts.sum(axis=1)
        right_counts = node.stats.counts - left_counts
        right_tot = total - left_tot
        i_left = impurity_from_count_matrix(left_counts, left_tot, criterion)
        i_right = impurity_from_count_matrix(right_counts, right_tot, criterion)
    else:
        wy = ws * ys
        left_tot = np.cumsum(ws)[bounds]
        left_sum = np.cumsum(wy)[bounds]
        left_sq = np.cumsum(wy * ys)[bounds]
        right_tot = total - left_tot
        i_left = mse_from_moments(left_sum, left_sq, left_tot)
        i_right = mse_from_moments(node.stats.sum - left_sum,
                                   node.stats.sum_sq - left_sq, right_tot)

    decrease = node.impurity - (left_tot / total) * i_left - (right_tot / total) * i_right
    valid = (left_tot >= min_weight_leaf) & (right_tot >= min_weight_leaf) \
        if min_weight_leaf > 0 else None
    if valid is not None:
        if not valid.any():
            return None
        decrease = np.where(valid, decrease, -np.inf)

    best = int(np.argmax(decrease))  # first max == smallest threshold
    if not np.isfinite(decrease[best]):
        return None
    pos = bounds[best]
    threshold = 0.5 * (xs[pos] + xs[pos + 1])
    if threshold >= xs[pos + 1]:  # midpoint rounded up to the next value
        threshold = xs[pos]
    return BinarySplit(feature=j, threshold=float(threshold),
                       decrease=float(decrease[best]),
                       n_left=float(left_tot[best]), n_right=float(right_tot[best]))


def _scan_small(ds, node, j, xs, ys, ws, criterion, min_weight_leaf):
    """Same scan in scalar Python; faster than numpy on small nodes."""
    n = len(xs)
    xs = xs.tolist()
    ws = ws.tolist()
    total = node.stats.total
    imp = node.impurity
    best_dec = -np.inf
    best_pos = -1
    best_left = 0.0
    if ds.task == CLASSIFICATION:
        ys = ys.tolist()
        parent = node.stats.counts.tolist()
        left = [0.0] * len(parent)
        left_w = 0.0
        use_gini = criterion == "gini"
        for i in range(n - 1):
            w = ws[i]
            left[ys[i]] += w
            left_w += w
            if xs[i] == xs[i + 1]:
                continue
            right_w = total - left_w
            if min_weight_leaf > 0 and (left_w < min_weight_leaf or right_w < min_weight_leaf):
                continue
            if use_gini:
                sl = sr = 0.0
                for k, c in enumerate(left):
                    sl += c * c
                    r = parent[k] - c
                    sr += r * r
                i_l = 1.0 - sl / (left_w * left_w)
                i_r = 1.0 - sr / (right_w * right_w)
            else:
                i_l = i_r = 0.0
                for k, c in enumerate(left):
                    if c > 0.0:
                        pl = c / left_w
                        i_l -= pl * log2(pl)
                    r = parent[k] - c
                    if r > 0.0:
                        pr = r / right_w
                        i_r -= pr * log2(pr)
            dec = imp - (left_w * i_l + right_w * i_r) / total
            if dec > best_dec:
                best_dec = dec
                best_pos = i
                best_left = left_w
    else:
        ys = ys.tolist()
        sum_y = node.stats.sum
        sum_sq = node.stats.sum_sq
        left_w = left_s = left_q = 0.0
        for i in range(n - 1):
            w = ws[i]
            y = ys[i]
            wy = w * y
            left_w += w
            left_s += wy
            left_q += wy * y
            if xs[i] == xs[i + 1]:
                continue
            right_w = total - left_w
            if min_weight_leaf > 0 and (left_w < min_weight_leaf or right_w < min_weight_leaf):
                continue
            m_l = left_s / left_w
            i_l = left_q / left_w - m_l * m_l
            if i_l < 0.0:
                i_l = 0.0
            m_r = (sum_y - left_s) / right_w
            i_r = (sum_sq - left_q) / right_w - m_r * m_r
            if i_r < 0.0:
                i_r = 0.0
            dec = imp - (left_w * i_l + right_w * i_r) / total
            if dec > best_dec:
                best_dec = dec
                best_pos = i
                best_left = left_w
    if best_pos < 0:
        return None
    threshold = 0.5 * (xs[best_pos] + xs[best_pos + 1])
    if threshold >= xs[best_pos + 1]:
        threshold = xs[best_pos]
    return BinarySplit(feature=j, threshold=float(threshold), decrease=float(best_dec),
                       n_left=best_left, n_right=total - best_left)


def _draw_features(n_features: int, K: int, rng):
    # constant features keep their slot in the draw; ascending order makes
    # the lowest-index tie-break deterministic
    if K >= n_features:
        return range(n_features)
    if K == 1:
        return (int(rng.integers(n_features)),)
    pool = list(range(n_features))  # partial Fisher-Yates
    out = []
    last = n_features - 1
    for _ in range(K):
        r = int(rng.integers(last + 1))
        out.append(pool[r])
        pool[r] = pool[last]
        last -= 1
    out.sort()
    return out


def find_best_split_k(ds: Dataset, node: NodeView, K: int, rng, criterion: str,
                      min_weight_leaf: float = 0.0) -> BinarySplit | None:
    """Best split among K features drawn uniformly without replacement."""
    if not 1 <= K <= ds.n_features:
        raise SplitterError(f"K={K} out of range for {ds.n_features} features")
    best = None
    for j in _draw_features(ds.n_features, K, rng):
        if node.constant[j]:
            continue
        split = find_best_split_feature(ds, node, int(j), criterion, min_weight_leaf)
        if split is not None and (best is None or split.decrease > best.decrease):
            best = split
    return best


def find_best_split_all(ds: Dataset, node: NodeView, criterion: str,
                        min_weight_leaf: float = 0.0) -> BinarySplit | None:
    """Exhaustive search over every feature, in index order."""
    best = None
    for j in range(ds.n_features):
        if node.constant[j]:
            continue
        split = find_best_split_feature(ds, node, j, criterion, min_weight_leaf)
        if split is not None and (best is None or split.decrease > best.decrease):
            best = split
    return best


def draw_random_split_ets(ds: Dataset, node: NodeView, j: int, rng, criterion: str,
                          min_weight_leaf: float = 0.0) -> BinarySplit | None:
    """One uniformly drawn threshold on feature j, with its impurity decrease."""
    idx = node.indices
    xv = ds.features[j][idx]
    lo = float(xv.min())
    hi = float(xv.max())
    if lo == hi:
        node.constant[j] = True
        return None
    nu = float(rng.uniform(lo, hi))
    if not lo <= nu < hi:  # guard float rounding at the upper end
        nu = lo
    return _evaluate_binary(ds, node, j, nu, criterion, min_weight_leaf)


def draw_random_split_k_ets(ds: Dataset, node: NodeView, K: int, rng, criterion: str,
                            min_weight_leaf: float = 0.0) -> BinarySplit | None:
    """ETs node search: one random split per drawn feature, keep the best."""
    if not 1 <= K <= ds.n_features:
        raise SplitterError(f"K={K} out of range for {ds.n_features} features")
    best = None
    for j in _draw_features(ds.n_features, K, rng):
        if node.constant[j]:
            continue
        split = draw_random_split_ets(ds, node, int(j), rng, criterion, min_weight_leaf)
        if split is not None and (best is None or split.decrease > best.decrease):
            best = split
    return best


def draw_random_split_pert(ds: Dataset, node: NodeView, rng, criterion: str = "gini",
                           budget: int = PERT_ATTEMPT_BUDGET) -> BinarySplit | None:
    """Threshold between two random samples of different classes.

    Retries while the drawn pair coincides on the drawn feature; gives up
    (and the node becomes a leaf) once the attempt budget is exhausted.
    """
    if ds.task != CLASSIFICATION:
        raise SplitterError("PERT splits are defined for classification only")
    idx = node.indices
    y = ds.targets[idx]
    n = len(idx)
    attempts = 0
    draws = 0
    while attempts < budget and draws < 64 * budget:
        draws += 1
        i1 = int(rng.integers(n))
        i2 = int(rng.integers(n))
        if y[i1] == y[i2]:
            continue  # not a qualifying pair; does not consume the budget
        attempts += 1
        j = int(rng.integers(ds.n_features))
        x1 = float(ds.features[j][idx[i1]])
        x2 = float(ds.features[j][idx[i2]])
        if x1 == x2:
            continue
        alpha = float(rng.uniform(0.0, 1.0))
        nu = alpha * x1 + (1.0 - alpha) * x2
        split = _evaluate_binary(ds, node, j, nu, criterion, 0.0)
        if split is not None:
            return split
    return None


def _evaluate_binary(ds: Dataset, node: NodeView, j: int, nu: float, criterion: str,
                     min_weight_leaf: float) -> BinarySplit | None:
    idx = node.indices
    y, w = node.targets_weights(ds)
    if len(idx) <= _SMALL_NODE:
        return _evaluate_binary_small(ds, node, j, nu, y, w, criterion, min_weight_leaf)
    mask = ds.features[j][idx] <= nu
    left_tot = float(w[mask].sum())
    right_tot = node.stats.total - left_tot
    if left_tot <= 0 or right_tot <= 0:
        return None
    if min_weight_leaf > 0 and (left_tot < min_weight_leaf or right_tot < min_weight_leaf):
        return None
    if ds.task == CLASSIFICATION:
        left = ClassStats(np.bincount(y[mask], weights=w[mask],
                                      minlength=ds.n_classes).astype(float), left_tot)
        right = ClassStats(node.stats.counts - left.counts, right_tot)
    else:
        wl = w[mask]
        yl = y[mask]
        left = RegressionStats(float(np.dot(wl, yl)), float(np.dot(wl, yl * yl)), left_tot)
        right = RegressionStats(node.stats.sum - left.sum,
                                node.stats.sum_sq - left.sum_sq, right_tot)
    decrease = (node.impurity
                - (left_tot / node.stats.total) * node_impurity(left, criterion)
                - (right_tot / node.stats.total) * node_impurity(right, criterion))
    return BinarySplit(feature=j, threshold=float(nu), decrease=float(decrease),
                       n_left=left_tot, n_right=right_tot)


def _evaluate_binary_small(ds, node, j, nu, y, w, criterion, min_weight_leaf):
    xv = ds.features[j][node.indices].tolist()
    ws = w.tolist()
    total = node.stats.total
    if ds.task == CLASSIFICATION:
        ys = y.tolist()
        parent = node.stats.counts.tolist()
        left = [0.0] * len(parent)
        left_w = 0.0
        for i, x in enumerate(xv):
            if x <= nu:
                left[ys[i]] += ws[i]
                left_w += ws[i]
        right_w = total - left_w
        if left_w <= 0 or right_w <= 0:
            return None
        if min_weight_leaf > 0 and (left_w < min_weight_leaf or right_w < min_weight_leaf):
            return None
        if criterion == "gini":
            sl = sr = 0.0
            for k, c in enumerate(left):
                sl += c * c
                r = parent[k] - c
                sr += r * r
            i_l = 1.0 - sl / (left_w * left_w)
            i_r = 1.0 - sr / (right_w * right_w)
        else:
            i_l = i_r = 0.0
            for k, c in enumerate(left):
                if c > 0.0:
                    pl = c / left_w
                    i_l -= pl * log2(pl)
                r = parent[k] - c
                if r > 0.0:
                    pr = r / right_w
                    i_r -= pr * log2(pr)
    else:
        ys = y.tolist()
        left_w = left_s = left_q = 0.0
        for i, x in enumerate(xv):
            if x <= nu:
                wi = ws[i]
                wy = wi * ys[i]
                left_w += wi
                left_s += wy
                left_q += wy * ys[i]
        right_w = total - left_w
        if left_w <= 0 or right_w <= 0:
            return None
        if min_weight_leaf > 0 and (left_w < min_weight_leaf or right_w < min_weight_leaf):
            return None
        m_l = left_s / left_w
        i_l = max(0.0, left_q / left_w - m_l * m_l)
        m_r = (node.stats.sum - left_s) / right_w
        i_r = max(0.0, (node.stats.sum_sq - left_q) / right_w - m_r * m_r)
    decrease = node.impurity - (left_w * i_l + right_w * i_r) / total
    return BinarySplit(feature=j, threshold=float(nu), decrease=float(decrease),
                       n_left=left_w, n_right=right_w)


def multiway_split(ds: Dataset, node: NodeView, j: int,
                   criterion: str = "entropy") -> MultiwaySplit:
    """One child per category of feature j; empty children contribute p = 0."""
    kind = ds.feature_kinds[j]
    if not kind.is_categorical:
        raise SplitterError(f"feature {j} is ordered; multiway splits need categories")
    if node.constant[j]:
        raise SplitterError(f"feature {j} already used on this branch")
    idx = node.indices
    codes = ds.features[j][idx].astype(np.intp)
    w = ds.weights[idx]
    card = kind.cardinality
    child_tot = np.bincount(codes, weights=w, minlength=card)
    total = node.stats.total
    if ds.task == CLASSIFICATION:
        counts = np.zeros((card, ds.n_classes))
        np.add.at(counts, (codes, ds.targets[idx]), w)
        i_children = impurity_from_count_matrix(counts, child_tot, criterion)
    else:
        y = ds.targets[idx]
        wy = w * y
        sums = np.bincount(codes, weights=wy, minlength=card)
        sqs = np.bincount(codes, weights=wy * y, minlength=card)
        i_children = mse_from_moments(sums, sqs, child_tot)
    weighted = np.where(child_tot > 0, (child_tot / total) * i_children, 0.0)
    decrease = node.impurity - float(weighted.sum())
    return MultiwaySplit(feature=j, arity=card, decrease=decrease)
