import math

import numpy as np
import pytest

from patchwood.criteria import ClassStats, node_impurity
from patchwood.dataset import CLASSIFICATION, Dataset, categorical
from patchwood.splitter import (
    NodeView,
    SplitterError,
    draw_random_split_ets,
    draw_random_split_pert,
    find_best_split_all,
    find_best_split_feature,
    find_best_split_k,
    multiway_split,
    node_stats,
)


def make_node(ds: Dataset, rows=None, criterion=None):
    samples = np.arange(ds.n_samples, dtype=np.intp) if rows is None \
        else np.asarray(rows, dtype=np.intp)
    stats = node_stats(ds, samples)
    if criterion is None:
        criterion = "gini" if ds.task == CLASSIFICATION else "mse"
    return NodeView(samples, 0, len(samples), np.zeros(ds.n_features, dtype=bool),
                    node_impurity(stats, criterion), stats)


def clf_dataset(x_cols, y, w=None, n_classes=None):
    y = np.asarray(y)
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    return Dataset(features=[np.asarray(c, dtype=float) for c in x_cols],
                   targets=y, weights=np.ones(len(y)) if w is None else np.asarray(w, float),
                   task="classification", n_classes=n_classes)


def reg_dataset(x_cols, y, w=None):
    y = np.asarray(y, dtype=float)
    return Dataset(features=[np.asarray(c, dtype=float) for c in x_cols],
                   targets=y, weights=np.ones(len(y)) if w is None else np.asarray(w, float),
                   task="regression")


def brute_force_best(ds, rows, j, criterion):
    """Independent oracle: evaluate every midpoint split from scratch."""
    rows = np.asarray(rows)
    xv = ds.features[j][rows]
    values = np.unique(xv)
    if len(values) < 2:
        return None
    parent = node_stats(ds, rows)
    parent_imp = node_impurity(parent, criterion)
    best = None
    for lo, hi in zip(values[:-1], values[1:]):
        nu = 0.5 * (lo + hi)
        if nu >= hi:
            nu = lo
        mask = xv <= nu
        left = node_stats(ds, rows[mask])
        right = node_stats(ds, rows[~mask])
        dec = parent_imp - (left.total * node_impurity(left, criterion)
                            + right.total * node_impurity(right, criterion)) / parent.total
        if best is None or dec > best[0]:
            best = (dec, nu)
    return best


class TestFindBestSplitFeature:
    def test_perfect_separation_midpoint(self):
        ds = clf_dataset([[1.0, 2.0, 3.0, 4.0]], [0, 0, 1, 1])
        node = make_node(ds)
        split = find_best_split_feature(ds, node, 0, "gini")
        assert split.threshold == 2.5
        assert split.decrease == pytest.approx(node.impurity, abs=1e-12)
        assert split.n_left == 2 and split.n_right == 2

    def test_constant_feature_returns_none_and_marks(self):
        ds = clf_dataset([[2.0, 2.0, 2.0]], [0, 1, 0])
        node = make_node(ds)
        assert find_best_split_feature(ds, node, 0, "gini") is None
        assert node.constant[0]

    @pytest.mark.parametrize("task,criterion", [
        ("classification", "gini"), ("classification", "entropy"),
        ("regression", "mse"),
    ])
    def test_matches_brute_force_on_random_nodes(self, task, criterion):
        rng = np.random.default_rng(42)
        for trial in range(50):
            n = int(rng.integers(2, 65))
            # duplicate-heavy values stress the boundary detection
            x = rng.choice(rng.normal(size=max(2, n // 2)), size=n)
            if task == "classification":
                ds = clf_dataset([x], rng.integers(0, 3, size=n), n_classes=3)
            else:
                ds = reg_dataset([x], rng.normal(size=n))
            node = make_node(ds, criterion=criterion)
            split = find_best_split_feature(ds, node, 0, criterion)
            oracle = brute_force_best(ds, np.arange(n), 0, criterion)
            if oracle is None:
                assert split is None
            else:
                assert split.decrease == pytest.approx(oracle[0], abs=1e-12)

    def test_row_order_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=40)
        y = rng.integers(0, 2, size=40)
        ds = clf_dataset([x], y)
        base = find_best_split_feature(ds, make_node(ds), 0, "gini")
        perm = rng.permutation(40)
        ds2 = clf_dataset([x[perm]], y[perm])
        again = find_best_split_feature(ds2, make_node(ds2), 0, "gini")
        assert again.threshold == base.threshold
        assert again.decrease == pytest.approx(base.decrease, abs=1e-12)

    def test_tie_breaks_to_smallest_threshold(self):
        # symmetric labels: splits at 1.5 and 2.5 have equal decrease
        ds = clf_dataset([[1.0, 2.0, 3.0]], [0, 1, 0])
        split = find_best_split_feature(ds, make_node(ds), 0, "gini")
        assert split.threshold == 1.5

    def test_min_weight_leaf_filters_candidates(self):
        ds = clf_dataset([[1.0, 2.0, 3.0, 4.0]], [0, 0, 0, 1])
        node = make_node(ds)
        unrestricted = find_best_split_feature(ds, node, 0, "gini")
        assert unrestricted.threshold == 3.5
        node2 = make_node(ds)
        restricted = find_best_split_feature(ds, node2, 0, "gini", min_weight_leaf=2.0)
        assert restricted.n_left >= 2 and restricted.n_right >= 2


class TestFindBestSplitK:
    def test_k_equals_p_matches_exhaustive(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = int(rng.integers(4, 50))
            cols = [rng.normal(size=n) for _ in range(4)]
            ds = clf_dataset(cols, rng.integers(0, 2, size=n))
            full = find_best_split_all(ds, make_node(ds), "gini")
            sub = find_best_split_k(ds, make_node(ds), 4, np.random.default_rng(0), "gini")
            assert sub.feature == full.feature
            assert sub.threshold == full.threshold
            assert sub.decrease == full.decrease

    def test_k1_draws_each_feature_uniformly(self):
        ds = clf_dataset([[0.0, 1.0, 2.0, 3.0], [3.0, 2.0, 1.0, 0.0]], [0, 1, 0, 1])
        rng = np.random.default_rng(123)
        hits = np.zeros(2)
        for _ in range(10_000):
            split = find_best_split_k(ds, make_node(ds), 1, rng, "gini")
            hits[split.feature] += 1
        freq = hits / hits.sum()
        assert abs(freq[0] - 0.5) < 0.02

    def test_all_constant_returns_none(self):
        ds = clf_dataset([[1.0, 1.0], [2.0, 2.0]], [0, 1])
        node = make_node(ds)
        assert find_best_split_k(ds, node, 2, np.random.default_rng(0), "gini") is None
        assert node.constant.all()

    def test_k_out_of_range(self):
        ds = clf_dataset([[1.0, 2.0]], [0, 1])
        with pytest.raises(SplitterError):
            find_best_split_k(ds, make_node(ds), 2, np.random.default_rng(0), "gini")


class TestEtsSplit:
    def test_constant_feature_none(self):
        ds = clf_dataset([[5.0, 5.0, 5.0]], [0, 1, 0])
        node = make_node(ds)
        assert draw_random_split_ets(ds, node, 0, np.random.default_rng(0), "gini") is None
        assert node.constant[0]

    def test_threshold_always_in_half_open_range(self):
        ds = reg_dataset([[0.0, 1.0, 2.0]], [0.0, 1.0, 2.0])
        rng = np.random.default_rng(4)
        node = make_node(ds)
        for _ in range(500):
            split = draw_random_split_ets(ds, node, 0, rng, "mse")
            assert 0.0 <= split.threshold < 2.0
            assert split.n_left > 0 and split.n_right > 0

    def test_partition_probability_on_three_values(self):
        # values {0,1,2}: a uniform threshold isolates {0} with probability 1/2
        ds = clf_dataset([[0.0, 1.0, 2.0]], [0, 1, 1])
        rng = np.random.default_rng(77)
        node = make_node(ds)
        lone_zero = 0
        trials = 10_000
        for _ in range(trials):
            split = draw_random_split_ets(ds, node, 0, rng, "gini")
            lone_zero += split.n_left == 1
        assert abs(lone_zero / trials - 0.5) < 0.02


class TestPertSplit:
    def test_threshold_between_pair_values(self):
        ds = clf_dataset([[1.0, 5.0], [2.0, 2.0]], [0, 1])
        rng = np.random.default_rng(6)
        for _ in range(300):
            split = draw_random_split_pert(ds, make_node(ds), rng)
            # only the first feature differs between the two classes
            assert split.feature == 0
            assert 1.0 <= split.threshold <= 5.0

    def test_budget_exhaustion_on_coincident_pairs(self):
        # different classes but identical inputs: no valid threshold exists
        ds = clf_dataset([[3.0, 3.0], [1.0, 1.0]], [0, 1])
        assert draw_random_split_pert(ds, make_node(ds), np.random.default_rng(0)) is None

    def test_regression_rejected(self):
        ds = reg_dataset([[1.0, 2.0]], [0.0, 1.0])
        with pytest.raises(SplitterError):
            draw_random_split_pert(ds, make_node(ds), np.random.default_rng(0))


def entropy_of(p):
    return -sum(q * math.log2(q) for q in p if q > 0)


class TestMultiwaySplit:
    def test_led_root_split_on_fifth_segment(self, led_exhaustive):
        node = make_node_entropy(led_exhaustive)
        split = multiway_split(led_exhaustive, node, 4, "entropy")
        assert split.arity == 2
        # segment 5 is lit for digits {0,2,6,8}: children hold 0.4/0.6 of mass
        idx = node.indices
        codes = led_exhaustive.features[4][idx]
        w = led_exhaustive.weights[idx]
        child_w = [w[codes == v].sum() for v in (0, 1)]
        assert child_w == [6.0, 4.0]
        # oracle: I(X5; Y) = H(Y) - H(Y | X5) on the uniform digit distribution
        expected = math.log2(10) - (0.4 * math.log2(4) + 0.6 * math.log2(6))
        assert split.decrease == pytest.approx(expected, abs=1e-12)

    def test_unobserved_category_leaves_empty_child(self):
        ds = Dataset(features=[np.array([1, 1, 1])], targets=np.array([0, 1, 0]),
                     weights=np.ones(3), task="classification", n_classes=2,
                     feature_kinds=[categorical(2)])
        node = make_node_entropy(ds)
        split = multiway_split(ds, node, 0, "entropy")
        assert split.arity == 2
        assert split.decrease == pytest.approx(0.0, abs=1e-12)

    def test_child_weights_conserved(self, led_exhaustive):
        node = make_node_entropy(led_exhaustive)
        for j in range(7):
            idx = node.indices
            codes = led_exhaustive.features[j][idx]
            w = led_exhaustive.weights[idx]
            total = sum(w[codes == v].sum() for v in (0, 1))
            assert total == pytest.approx(node.stats.total, abs=1e-9)

    def test_used_feature_rejected(self, led_exhaustive):
        node = make_node_entropy(led_exhaustive)
        node.constant[2] = True
        with pytest.raises(SplitterError):
            multiway_split(led_exhaustive, node, 2, "entropy")

    def test_ordered_feature_rejected(self):
        ds = reg_dataset([[1.0, 2.0]], [0.0, 1.0])
        with pytest.raises(SplitterError):
            multiway_split(ds, make_node(ds), 0, "mse")


def make_node_entropy(ds):
    samples = np.arange(ds.n_samples, dtype=np.intp)
    stats = node_stats(ds, samples)
    return NodeView(samples, 0, len(samples), np.zeros(ds.n_features, dtype=bool),
                    node_impurity(stats, "entropy"), stats)


class TestConservation:
    def test_children_stats_sum_to_parent_for_all_strategies(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=30)
        y = rng.integers(0, 3, size=30)
        w = rng.uniform(0.2, 2.0, size=30)
        ds = clf_dataset([x, rng.normal(size=30)], y, w=w, n_classes=3)

        def check(split):
            mask = ds.features[split.feature] <= split.threshold
            left = ClassStats.from_arrays(y[mask], w[mask], 3)
            right = ClassStats.from_arrays(y[~mask], w[~mask], 3)
            assert left.total == pytest.approx(split.n_left, abs=1e-9)
            assert right.total == pytest.approx(split.n_right, abs=1e-9)
            total = node_stats(ds, np.arange(30)).total
            assert left.total + right.total == pytest.approx(total, abs=1e-9)

        check(find_best_split_all(ds, make_node(ds), "gini"))
        check(find_best_split_k(ds, make_node(ds), 1, rng, "entropy"))
        check(draw_random_split_ets(ds, make_node(ds), 0, rng, "gini"))
        check(draw_random_split_pert(ds, make_node(ds), rng))
