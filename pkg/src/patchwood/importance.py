"""Variable importances: empirical MDI, permutation importance, and the
exact analytic engine for totally randomized multiway trees on finite
discrete distributions.

All information quantities are in bits.  The analytic importance of a
variable decomposes over conditioning-set sizes k; ``by_degree[j][k]``
holds the degree-k term and rows sum to the totals.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace
from math import comb

import numpy as np

from .dataset import CLASSIFICATION, DataError, Dataset, DiscreteJoint
from .forest import Forest, ForestConfig, fit, no_sampling, oob_error
from .tree import BuildConfig, TreeArrays

#: enumerating conditioning sets costs O(p * 2^(p-1)) CMI evaluations
DEFAULT_VARIABLE_LIMIT = 16


@dataclass
class ImportanceReport:
    totals: np.ndarray
    by_degree: np.ndarray | None  # (p, p); None when the method has no decomposition
    normalized: bool
    method: str

    def normalize(self) -> "ImportanceReport":
        z = float(self.totals.sum())
        if z <= 0:
            return dc_replace(self, normalized=True)
        by_degree = None if self.by_degree is None else self.by_degree / z
        return ImportanceReport(self.totals / z, by_degree, True, self.method)


@dataclass(frozen=True)
class CmiQuery:
    variable: int
    conditioning: tuple = ()

    def __post_init__(self):
        if self.variable in self.conditioning:
            raise ValueError("the target variable cannot appear in the conditioning set")


# ---------------------------------------------------------------------------
# Empirical importances

def mdi_tree(tree: TreeArrays, n_features: int | None = None):
    """Per-variable sums of p(t) * decrease over one tree's internal nodes.

    Node probabilities are tree-local (n_node_samples / root size), so the
    per-tree totals telescope exactly to root impurity minus the weighted
    leaf impurities.  Depths past p-1 fold into the last degree column,
    which only happens when binary trees reuse a feature along a branch.
    """
    p = tree.n_features if n_features is None else n_features
    by_degree = np.zeros((p, p))
    root_w = tree.n_node_samples[0]
    depth = np.zeros(tree.node_count, dtype=np.int64)
    for t in range(tree.node_count):
        kids = tree.node_children(t)
        if not kids:
            continue
        for c in kids:
            depth[c] = depth[t] + 1
        n_t = tree.n_node_samples[t]
        if n_t <= 0:
            continue
        child_term = sum(tree.n_node_samples[c] * tree.impurity[c]
                         for c in kids if tree.n_node_samples[c] > 0)
        decrease = tree.impurity[t] - child_term / n_t
        by_degree[tree.feature[t], min(depth[t], p - 1)] += (n_t / root_w) * decrease
    return by_degree


def mdi(forest: Forest, normalize: bool = False) -> ImportanceReport:
    """Mean Decrease of Impurity, averaged over the forest's trees."""
    p = forest.n_features
    by_degree = np.zeros((p, p))
    for tree in forest.trees:
        by_degree += mdi_tree(tree, p)
    by_degree /= forest.n_trees
    report = ImportanceReport(by_degree.sum(axis=1), by_degree, False, "mdi")
    return report.normalize() if normalize else report


def permutation_importance(forest: Forest, ds: Dataset, repeats: int = 5,
                           rng=None) -> ImportanceReport:
    """Mean out-of-bag error increase when one column is randomly permuted."""
    if rng is None:
        rng = np.random.default_rng(0)
    baseline, _ = oob_error(forest, ds)
    totals = np.zeros(ds.n_features)
    for j in range(ds.n_features):
        for _ in range(repeats):
            perm = rng.permutation(ds.n_samples)
            cols = list(ds.features)
            cols[j] = cols[j][perm]
            shuffled = dc_replace(ds, features=cols)
            err, _ = oob_error(forest, shuffled)
            totals[j] += (err - baseline) / repeats
    return ImportanceReport(totals, None, False, "permutation")


def empirical_trt_forest(ds: Dataset, k_features: int = 1, n_trees: int = 1000,
                         seed: int = 0, n_threads: int = 1) -> Forest:
    """Fully developed multiway forest with K-guided random variable choice.

    K = 1 gives totally randomized trees; the split criterion is the
    entropy so importances are in bits.
    """
    if ds.task != CLASSIFICATION:
        raise DataError("totally randomized multiway trees need a classification task")
    cfg = ForestConfig(
        n_trees=n_trees,
        sampling=no_sampling(),
        base=BuildConfig(criterion="entropy", splitter="trt-multiway",
                         k_features=k_features),
        seed=seed,
        n_threads=n_threads,
    )
    return fit(ds, cfg)


# ---------------------------------------------------------------------------
# Exact information quantities on a dense joint table

class _EntropyCache:
    """Memoized marginal entropies H(S) / H(S + Y) of a joint table."""

    def __init__(self, joint: DiscreteJoint):
        self.prob = joint.prob
        self.p = joint.n_variables
        self._cache = {}

    def entropy(self, var_mask: int, with_y: bool) -> float:
        key = (var_mask, with_y)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        drop = [i for i in range(self.p) if not var_mask >> i & 1]
        if not with_y:
            drop.append(self.p)
        marg = self.prob.sum(axis=tuple(drop)) if drop else self.prob
        flat = marg.reshape(-1)
        pos = flat[flat > 0]
        value = float(-(pos * np.log2(pos)).sum())
        self._cache[key] = value
        return value

    def cmi(self, j: int, b_mask: int) -> float:
        # I(X_j; Y | B) = H(B + j) - H(B) - H(B + j + Y) + H(B + Y)
        jm = 1 << j
        return (self.entropy(b_mask | jm, False) - self.entropy(b_mask, False)
                - self.entropy(b_mask | jm, True) + self.entropy(b_mask, True))


def cmi(joint: DiscreteJoint, query: CmiQuery) -> float:
    """Exact conditional mutual information I(X_j; Y | B) in bits."""
    p = joint.n_variables
    if not 0 <= query.variable < p:
        raise DataError(f"variable {query.variable} out of range")
    mask = 0
    for b in query.conditioning:
        if not 0 <= b < p:
            raise DataError(f"conditioning variable {b} out of range")
        mask |= 1 << b
    return _EntropyCache(joint).cmi(query.variable, mask)


def _iter_subsets(p: int, excluded: int):
    """All masks over {0..p-1} \\ {excluded}, with their popcount."""
    jm = 1 << excluded
    for mask in range(1 << p):
        if mask & jm:
            continue
        yield mask, int(bin(mask).count("1"))


def _analytic(joint: DiscreteJoint, factor, method: str,
              limit: int = DEFAULT_VARIABLE_LIMIT) -> ImportanceReport:
    p = joint.n_variables
    if p > limit:
        raise DataError(f"analytic engine limited to {limit} variables, got {p}")
    cache = _EntropyCache(joint)
    by_degree = np.zeros((p, p))
    factors = [factor(k) for k in range(p)]
    for j in range(p):
        for mask, k in _iter_subsets(p, j):
            f = factors[k]
            if f:
                by_degree[j, k] += f * cache.cmi(j, mask)
    return ImportanceReport(by_degree.sum(axis=1), by_degree, False, method)


def analytic_mdi_trt(joint: DiscreteJoint,
                     limit: int = DEFAULT_VARIABLE_LIMIT) -> ImportanceReport:
    """Exact MDI of infinite ensembles of fully developed totally randomized
    trees: sum over k of [1 / (C(p,k) (p-k))] sum over |B|=k of I(X_j; Y|B)."""
    p = joint.n_variables
    return _analytic(joint, lambda k: 1.0 / (comb(p, k) * (p - k)),
                     "analytic-trt", limit)


def analytic_mdi_pruned(joint: DiscreteJoint, depth: int,
                        limit: int = DEFAULT_VARIABLE_LIMIT) -> ImportanceReport:
    """Analytic MDI of trees pruned at depth q: the outer sum stops at q-1."""
    p = joint.n_variables
    if not 1 <= depth <= p:
        raise DataError(f"depth {depth} out of range [1, {p}]")
    return _analytic(joint,
                     lambda k: 1.0 / (comb(p, k) * (p - k)) if k < depth else 0.0,
                     "analytic-pruned", limit)


def analytic_mdi_subspace(joint: DiscreteJoint, subspace: int,
                          limit: int = DEFAULT_VARIABLE_LIMIT) -> ImportanceReport:
    """Analytic MDI of fully developed trees on random q-variable subspaces.

    Evaluated from the unsimplified subspace-probability form (the factor
    C(p-k-1, q-k-1)/C(p,q) * 1/C(q,k) * 1/(q-k)) so its algebraic collapse
    onto the pruned formula is machine-checked rather than assumed.
    """
    p = joint.n_variables
    q = subspace
    if not 1 <= q <= p:
        raise DataError(f"subspace size {q} out of range [1, {p}]")

    def factor(k: int) -> float:
        if k >= q:
            return 0.0
        return comb(p - k - 1, q - k - 1) / comb(p, q) / comb(q, k) / (q - k)

    return _analytic(joint, factor, "analytic-subspace", limit)


# ---------------------------------------------------------------------------
# Joint-table surgery and redundancy analysis

def append_redundant_copy(joint: DiscreteJoint, j: int) -> DiscreteJoint:
    """New joint with an exact copy of variable j appended as the last input."""
    p = joint.n_variables
    if not 0 <= j < p:
        raise DataError(f"variable {j} out of range")
    card = joint.cardinalities[j]
    grids = np.indices(joint.cardinalities)
    same = grids[j][..., None] == np.arange(card)  # (*cards, card)
    prob = joint.prob[..., None, :] * same[..., :, None]
    return DiscreteJoint(joint.cardinalities + (card,), joint.n_classes, prob)


def append_independent(joint: DiscreteJoint, cardinality: int,
                       marginal=None) -> DiscreteJoint:
    """New joint with an independent variable appended as the last input."""
    if marginal is None:
        marginal = np.full(cardinality, 1.0 / cardinality)
    marginal = np.asarray(marginal, dtype=float)
    if marginal.shape != (cardinality,) or abs(marginal.sum() - 1.0) > 1e-12:
        raise DataError("marginal must be a distribution over the new variable")
    prob = joint.prob[..., None, :] * marginal[:, None]
    return DiscreteJoint(joint.cardinalities + (cardinality,), joint.n_classes, prob)


@dataclass
class RedundancyReport:
    """Degree-wise effect of duplicating one variable (totally redundant copy)."""

    variable: int
    base: ImportanceReport
    augmented: ImportanceReport
    expected_factor: np.ndarray  # (p-k)/(p+1) for k = 0..p-1
    observed_factor: np.ndarray  # per-degree ratio for the duplicated variable
    others_delta: np.ndarray  # (p, p): term-by-term change for every variable


def redundancy_factor_check(joint: DiscreteJoint, j: int,
                            limit: int = DEFAULT_VARIABLE_LIMIT) -> RedundancyReport:
    """Duplicate X_j and compare degree-k terms against the (p-k)/(p+1) law."""
    p = joint.n_variables
    base = analytic_mdi_trt(joint, limit)
    augmented = analytic_mdi_trt(append_redundant_copy(joint, j), limit)
    expected = np.array([(p - k) / (p + 1) for k in range(p)])
    with np.errstate(invalid="ignore", divide="ignore"):
        observed = np.where(base.by_degree[j] != 0,
                            augmented.by_degree[j, :p] / base.by_degree[j],
                            np.nan)
    others_delta = augmented.by_degree[:p, :p] - base.by_degree
    return RedundancyReport(variable=j, base=base, augmented=augmented,
                            expected_factor=expected, observed_factor=observed,
                            others_delta=others_delta)
