"""Flat-array decision trees: builders, prediction and serialization.

Nodes live in parallel arrays (children, feature, threshold, impurity,
weighted size, value) with -1 as the sentinel for "no child" / "leaf".
Multiway nodes keep their per-category child lists in an auxiliary array.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from .criteria import DECREASE_EPS, node_impurity
from .dataset import CLASSIFICATION, DataError, Dataset, FeatureKind
from .splitter import (
    NodeView,
    SPLITTERS,
    SplitterError,
    draw_random_split_k_ets,
    draw_random_split_pert,
    find_best_split_all,
    find_best_split_k,
    multiway_split,
    node_stats,
)

SENTINEL = -1

#: node impurity at or below this counts as pure (stopping case: homogeneous output)
PURITY_EPS = 1e-12

FORMAT_NAME = "pwtree"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised for malformed or incompatible serialized models."""


@dataclass
class BuildConfig:
    """Hyper-parameters of a single tree build.

    ``k_features`` is the number K of candidate features drawn at each node
    (ignored by the exhaustive splitter; defaults to all features).
    Stopping controls: ``min_samples_split`` (N_min), ``max_depth`` (root is
    depth 0), ``min_samples_leaf`` (N_leaf), ``min_weighted_decrease`` (beta,
    compared against p(t) * decrease) and ``max_leaf_nodes`` (best-first only).
    """

    criterion: str | None = None  # default: gini (classification) / mse (regression)
    splitter: str = "best"
    k_features: int | None = None
    min_samples_split: float = 2
    max_depth: int | None = None
    min_samples_leaf: float = 1
    min_weighted_decrease: float = 0.0
    max_leaf_nodes: int | None = None
    order: str = "depth_first"
    seed: int | None = 0

    def validate(self) -> None:
        if self.splitter not in SPLITTERS:
            raise SplitterError(f"unknown splitter {self.splitter!r}")
        if self.order not in ("depth_first", "best_first"):
            raise ValueError(f"unknown build order {self.order!r}")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_weighted_decrease < 0:
            raise ValueError("min_weighted_decrease must be >= 0")
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 2:
            raise ValueError("max_leaf_nodes must be >= 2 or unset")
        if self.max_leaf_nodes is not None and self.order != "best_first":
            raise ValueError("max_leaf_nodes requires best_first order")
        if self.order == "best_first" and self.max_leaf_nodes is None:
            raise ValueError("best_first order requires max_leaf_nodes")

    def resolved_criterion(self, task: str) -> str:
        if self.criterion is not None:
            return self.criterion
        return "gini" if task == CLASSIFICATION else "mse"


class TreeArrays:
    """Array representation of a built tree; immutable after construction."""

    def __init__(self, task, n_features, n_classes, feature_kinds,
                 class_labels=None):
        self.task = task
        self.n_features = n_features
        self.n_classes = n_classes
        self.feature_kinds = list(feature_kinds)
        self.class_labels = class_labels
        self._left = []
        self._right = []
        self._children = []
        self._feature = []
        self._threshold = []
        self._impurity = []
        self._n_node = []
        self._value = []
        self._finalized = False

    # -- construction ------------------------------------------------

    def add_node(self, impurity, n_node_samples, value) -> int:
        node_id = len(self._left)
        self._left.append(SENTINEL)
        self._right.append(SENTINEL)
        self._children.append(None)
        self._feature.append(SENTINEL)
        self._threshold.append(math.nan)
        self._impurity.append(0.0 if impurity <= PURITY_EPS else float(impurity))
        self._n_node.append(float(n_node_samples))
        self._value.append(np.asarray(value, dtype=float))
        return node_id

    def set_binary_split(self, node_id, feature, threshold) -> None:
        self._feature[node_id] = int(feature)
        self._threshold[node_id] = float(threshold)

    def set_children(self, node_id, left, right) -> None:
        self._left[node_id] = left
        self._right[node_id] = right

    def set_multiway(self, node_id, feature, child_ids) -> None:
        self._feature[node_id] = int(feature)
        self._children[node_id] = list(child_ids)

    def finalize(self) -> "TreeArrays":
        self.left_child = np.array(self._left, dtype=np.int64)
        self.right_child = np.array(self._right, dtype=np.int64)
        self.children = self._children
        self.feature = np.array(self._feature, dtype=np.int64)
        self.threshold = np.array(self._threshold, dtype=float)
        self.impurity = np.array(self._impurity, dtype=float)
        self.n_node_samples = np.array(self._n_node, dtype=float)
        self.value = np.vstack(self._value)
        self._finalized = True
        return self

    # -- inspection ----------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self._left)

    def is_leaf(self, t: int) -> bool:
        return self.feature[t] == SENTINEL

    def node_children(self, t: int):
        if self.children[t] is not None:
            return self.children[t]
        if self.left_child[t] == SENTINEL:
            return []
        return [int(self.left_child[t]), int(self.right_child[t])]

    @property
    def n_leaves(self) -> int:
        return int(sum(1 for t in range(self.node_count) if self.is_leaf(t)))

    def remap_features(self, global_indices, n_features_global, feature_kinds_global):
        """Rewrite local feature ids to global ones after a column-subset build."""
        mapping = np.asarray(global_indices, dtype=np.int64)
        internal = self.feature != SENTINEL
        self.feature[internal] = mapping[self.feature[internal]]
        self.n_features = n_features_global
        self.feature_kinds = list(feature_kinds_global)
        return self


def _check_x(tree: TreeArrays, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (tree.n_features,):
        raise DataError(f"expected {tree.n_features} features, got {x.shape}")
    for j, kind in enumerate(tree.feature_kinds):
        if kind.is_categorical and not 0 <= int(x[j]) < kind.cardinality:
            raise DataError(f"categorical code {x[j]} of feature {j} out of range")
    return x


def apply(tree: TreeArrays, x) -> int:
    """Leaf index reached by the root-to-leaf descent for x."""
    x = _check_x(tree, x)
    t = 0
    while not tree.is_leaf(t):
        j = int(tree.feature[t])
        if tree.children[t] is not None:
            t = tree.children[t][int(x[j])]
        elif x[j] <= tree.threshold[t]:
            t = int(tree.left_child[t])
        else:
            t = int(tree.right_child[t])
    return t


def predict(tree: TreeArrays, x):
    """Class probabilities and argmax class, or the real-valued prediction."""
    leaf = apply(tree, x)
    return leaf_prediction(tree, leaf)


def leaf_prediction(tree: TreeArrays, leaf: int):
    value = tree.value[leaf]
    if tree.task == CLASSIFICATION:
        total = value.sum()
        probs = value / total if total > 0 else np.full_like(value, 1.0 / len(value))
        return probs, int(np.argmax(probs))
    return float(value[0])


def _as_matrix(ds_or_matrix) -> np.ndarray:
    if isinstance(ds_or_matrix, Dataset):
        return np.column_stack(ds_or_matrix.features).astype(float)
    return np.asarray(ds_or_matrix, dtype=float)


def apply_batch(tree: TreeArrays, X) -> np.ndarray:
    """Vectorized apply over the rows of X (Dataset or (n, p) matrix)."""
    X = _as_matrix(X)
    n = X.shape[0]
    if X.shape[1] != tree.n_features:
        raise DataError(f"expected {tree.n_features} features, got {X.shape[1]}")
    for j, kind in enumerate(tree.feature_kinds):
        if kind.is_categorical and n:
            codes = X[:, j].astype(np.int64)
            if codes.min() < 0 or codes.max() >= kind.cardinality:
                raise DataError(f"categorical code of feature {j} out of range")
    out = np.zeros(n, dtype=np.int64)
    if n == 0 or tree.is_leaf(0):
        return out
    flat_children, offsets = _flat_children(tree)
    active = np.arange(n)
    node = out  # aliases; out holds current node per row
    while len(active):
        t = node[active]
        feat = tree.feature[t]
        is_internal = feat != SENTINEL
        active = active[is_internal]
        if not len(active):
            break
        t = node[active]
        xv = X[active, tree.feature[t]]
        is_multi = offsets[t] >= 0
        nxt = np.where(xv <= tree.threshold[t], tree.left_child[t], tree.right_child[t])
        if is_multi.any():
            mt = t[is_multi]
            nxt[is_multi] = flat_children[offsets[mt] + xv[is_multi].astype(np.int64)]
        node[active] = nxt
    return out


def _flat_children(tree: TreeArrays):
    cached = getattr(tree, "_flat_children_cache", None)
    if cached is not None:
        return cached
    offsets = np.full(tree.node_count, -1, dtype=np.int64)
    data = []
    for t in range(tree.node_count):
        if tree.children[t] is not None:
            offsets[t] = len(data)
            data.extend(tree.children[t])
    cache = (np.array(data, dtype=np.int64), offsets)
    tree._flat_children_cache = cache
    return cache


def predict_batch(tree: TreeArrays, X):
    leaves = apply_batch(tree, X)
    if tree.task == CLASSIFICATION:
        values = tree.value[leaves]
        totals = values.sum(axis=1, keepdims=True)
        probs = np.divide(values, totals, out=np.full_like(values, 1.0 / values.shape[1]),
                          where=totals > 0)
        return probs, np.argmax(probs, axis=1)
    return tree.value[leaves, 0]


def resubstitution_error(tree: TreeArrays, ds: Dataset) -> float:
    """Weighted 0-1 error (classification) or weighted MSE (regression)."""
    total = float(ds.weights.sum())
    if ds.task == CLASSIFICATION:
        _, pred = predict_batch(tree, ds)
        return float(np.dot(ds.weights, pred != ds.targets) / total)
    pred = predict_batch(tree, ds)
    return float(np.dot(ds.weights, (pred - ds.targets) ** 2) / total)


def mean_leaf_depth(tree: TreeArrays) -> float:
    """Sample-weighted mean leaf depth with the root counted at depth 1."""
    depth = np.zeros(tree.node_count, dtype=np.int64)
    depth[0] = 1
    total = 0.0
    weighted = 0.0
    for t in range(tree.node_count):
        kids = tree.node_children(t)
        for c in kids:
            depth[c] = depth[t] + 1
        if not kids:
            weighted += tree.n_node_samples[t] * depth[t]
            total += tree.n_node_samples[t]
    return weighted / total if total > 0 else float(depth[0])


# ---------------------------------------------------------------------------
# Builders

def _node_value(ds: Dataset, stats):
    if ds.task == CLASSIFICATION:
        return stats.counts.copy()
    return np.array([stats.sum / stats.total if stats.total > 0 else 0.0])


def _root_setup(ds: Dataset, cfg: BuildConfig):
    cfg.validate()
    if ds.n_samples == 0:
        raise DataError("cannot build a tree on an empty dataset")
    samples = np.flatnonzero(ds.weights > 0).astype(np.intp)
    if len(samples) == 0:
        raise DataError("all sample weights are zero")
    if cfg.splitter == "trt-multiway":
        for j, kind in enumerate(ds.feature_kinds):
            if not kind.is_categorical:
                raise DataError(f"multiway trees need categorical features (column {j})")
    else:
        # binary split search assumes ordered values; 0/1 categories are
        # equivalent, larger category sets are not supported by thresholds
        for j, kind in enumerate(ds.feature_kinds):
            if kind.is_categorical and kind.cardinality > 2:
                raise DataError(
                    f"column {j} has {kind.cardinality} categories; binary "
                    "splitters take ordered or binary features only")
    return samples


def _find_split(ds, node, cfg, criterion, rng, min_leaf):
    k = cfg.k_features if cfg.k_features is not None else ds.n_features
    if cfg.splitter == "best":
        return find_best_split_all(ds, node, criterion, min_leaf)
    if cfg.splitter == "random-k":
        return find_best_split_k(ds, node, k, rng, criterion, min_leaf)
    if cfg.splitter == "ets":
        return draw_random_split_k_ets(ds, node, k, rng, criterion, min_leaf)
    if cfg.splitter == "pert":
        return draw_random_split_pert(ds, node, rng, criterion)
    raise SplitterError(f"splitter {cfg.splitter!r} is not a binary strategy")


def build(ds: Dataset, cfg: BuildConfig, rng=None) -> TreeArrays:
    """Greedy depth-first induction with stopping criteria (a)-(f)."""
    samples = _root_setup(ds, cfg)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if cfg.order == "best_first":
        return build_best_first(ds, cfg, rng)
    if cfg.splitter == "trt-multiway":
        return _build_multiway(ds, cfg, samples, rng)
    return _build_depth_first(ds, cfg, samples, rng)


def _build_depth_first(ds: Dataset, cfg: BuildConfig, samples, rng) -> TreeArrays:
    criterion = cfg.resolved_criterion(ds.task)
    tree = TreeArrays(ds.task, ds.n_features, ds.n_classes, ds.feature_kinds,
                      ds.class_labels)
    min_leaf = float(cfg.min_samples_leaf)
    beta = cfg.min_weighted_decrease

    root_stats = node_stats(ds, samples)
    root_weight = root_stats.total
    root_imp = node_impurity(root_stats, criterion)

    # (start, end, depth, parent, is_left, constant mask, stats, impurity)
    stack = [(0, len(samples), 0, SENTINEL, False,
              np.zeros(ds.n_features, dtype=bool), root_stats, root_imp)]
    while stack:
        start, end, depth, parent, is_left, constant, stats, imp = stack.pop()
        node_id = tree.add_node(imp, stats.total, _node_value(ds, stats))
        if parent != SENTINEL:
            if is_left:
                tree._left[parent] = node_id
            else:
                tree._right[parent] = node_id

        is_leaf = (imp <= PURITY_EPS                                    # (a)
                   or stats.total < cfg.min_samples_split               # (c)
                   or (cfg.max_depth is not None and depth >= cfg.max_depth))  # (d)
        split = None
        if not is_leaf:
            node = NodeView(samples, start, end, constant, imp, stats)
            split = _find_split(ds, node, cfg, criterion, rng, min_leaf)  # (b), (f)
            if split is not None:
                decrease = split.decrease if split.decrease >= DECREASE_EPS else 0.0
                if (stats.total / root_weight) * decrease < beta:        # (e)
                    split = None
        if split is None:
            continue

        tree.set_binary_split(node_id, split.feature, split.threshold)
        idx = samples[start:end]
        mask = ds.features[split.feature][idx] <= split.threshold
        samples[start:end] = np.concatenate([idx[mask], idx[~mask]])
        pos = start + int(np.count_nonzero(mask))

        left_idx = samples[start:pos]
        right_idx = samples[pos:end]
        left_stats = node_stats(ds, left_idx)
        right_stats = node_stats(ds, right_idx)
        # right pushed first so the left subtree is built first
        stack.append((pos, end, depth + 1, node_id, False, constant.copy(),
                      right_stats, node_impurity(right_stats, criterion)))
        stack.append((start, pos, depth + 1, node_id, True, constant.copy(),
                      left_stats, node_impurity(left_stats, criterion)))
    return tree.finalize()


def build_best_first(ds: Dataset, cfg: BuildConfig, rng=None) -> TreeArrays:
    """Expand nodes by decreasing p(t) * decrease until max_leaf_nodes leaves."""
    samples = _root_setup(ds, cfg)
    if cfg.splitter == "trt-multiway":
        raise SplitterError("best_first order supports binary splitters only")
    criterion = cfg.resolved_criterion(ds.task)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    tree = TreeArrays(ds.task, ds.n_features, ds.n_classes, ds.feature_kinds,
                      ds.class_labels)
    min_leaf = float(cfg.min_samples_leaf)
    beta = cfg.min_weighted_decrease

    root_stats = node_stats(ds, samples)
    root_weight = root_stats.total

    counter = 0
    heap = []

    def make_node(start, end, depth, constant, stats):
        nonlocal counter
        imp = node_impurity(stats, criterion)
        node_id = tree.add_node(imp, stats.total, _node_value(ds, stats))
        eligible = (imp > PURITY_EPS
                    and stats.total >= cfg.min_samples_split
                    and (cfg.max_depth is None or depth < cfg.max_depth))
        if eligible:
            node = NodeView(samples, start, end, constant, imp, stats)
            split = _find_split(ds, node, cfg, criterion, rng, min_leaf)
            if split is not None:
                decrease = split.decrease if split.decrease >= DECREASE_EPS else 0.0
                weighted = (stats.total / root_weight) * decrease
                if weighted >= beta:
                    counter += 1
                    heapq.heappush(heap, (-weighted, counter,
                                          (node_id, start, end, depth, constant, split)))
        return node_id

    make_node(0, len(samples), 0, np.zeros(ds.n_features, dtype=bool), root_stats)
    splits_done = 0
    while heap and splits_done + 2 <= cfg.max_leaf_nodes:
        _, _, (node_id, start, end, depth, constant, split) = heapq.heappop(heap)
        tree.set_binary_split(node_id, split.feature, split.threshold)
        idx = samples[start:end]
        mask = ds.features[split.feature][idx] <= split.threshold
        samples[start:end] = np.concatenate([idx[mask], idx[~mask]])
        pos = start + int(np.count_nonzero(mask))
        left = make_node(start, pos, depth + 1, constant.copy(), node_stats(ds, samples[start:pos]))
        right = make_node(pos, end, depth + 1, constant.copy(), node_stats(ds, samples[pos:end]))
        tree.set_children(node_id, left, right)
        splits_done += 1
    return tree.finalize()


def _build_multiway(ds: Dataset, cfg: BuildConfig, samples, rng) -> TreeArrays:
    """Totally randomized / K-guided multiway induction on categorical data.

    At each node, min(K, remaining) unused variables are drawn uniformly and
    the node is split on the decrease maximizer among them (random choice
    among exact ties).  Children for unobserved categories become zero-weight
    leaves inheriting the parent value.
    """
    criterion = cfg.resolved_criterion(ds.task)
    tree = TreeArrays(ds.task, ds.n_features, ds.n_classes, ds.feature_kinds,
                      ds.class_labels)
    k = cfg.k_features if cfg.k_features is not None else 1

    root_stats = node_stats(ds, samples)
    root_weight = root_stats.total
    beta = cfg.min_weighted_decrease

    stack = [(0, len(samples), 0, SENTINEL, -1,
              np.zeros(ds.n_features, dtype=bool), root_stats,
              node_impurity(root_stats, criterion))]
    while stack:
        start, end, depth, parent, slot, used, stats, imp = stack.pop()
        node_id = tree.add_node(imp, stats.total, _node_value(ds, stats))
        if parent != SENTINEL:
            tree._children[parent][slot] = node_id

        unused = np.flatnonzero(~used)
        is_leaf = (imp <= PURITY_EPS
                   or len(unused) == 0
                   or stats.total < cfg.min_samples_split
                   or (cfg.max_depth is not None and depth >= cfg.max_depth))
        if is_leaf:
            continue

        node = NodeView(samples, start, end, used.copy(), imp, stats)
        n_draw = min(k, len(unused))
        drawn = rng.choice(unused, size=n_draw, replace=False) if n_draw < len(unused) else unused
        candidates = [multiway_split(ds, node, int(j), criterion) for j in np.sort(drawn)]
        best = max(c.decrease for c in candidates)
        tied = [c for c in candidates if c.decrease >= best - 1e-12]
        split = tied[int(rng.integers(len(tied)))] if len(tied) > 1 else tied[0]

        decrease = split.decrease if split.decrease >= DECREASE_EPS else 0.0
        if beta > 0 and (stats.total / root_weight) * decrease < beta:
            continue

        j = split.feature
        idx = samples[start:end]
        codes = ds.features[j][idx].astype(np.intp)
        order = np.argsort(codes, kind="stable")
        samples[start:end] = idx[order]
        sorted_codes = codes[order]
        offsets = np.searchsorted(sorted_codes, np.arange(split.arity + 1))

        child_used = used.copy()
        child_used[j] = True
        tree.set_multiway(node_id, j, [SENTINEL] * split.arity)
        pending = []
        for v in range(split.arity):
            lo, hi = start + offsets[v], start + offsets[v + 1]
            if lo == hi:
                # unobserved category: zero-weight leaf carrying the parent value
                child = tree.add_node(0.0, 0.0, tree._value[node_id].copy())
                tree._children[node_id][v] = child
            else:
                child_stats = node_stats(ds, samples[lo:hi])
                pending.append((lo, hi, depth + 1, node_id, v, child_used,
                                child_stats, node_impurity(child_stats, criterion)))
        stack.extend(reversed(pending))  # lowest category built first
    return tree.finalize()


# ---------------------------------------------------------------------------
# Serialization

def tree_to_doc(tree: TreeArrays) -> dict:
    kinds = [{"kind": k.kind} if not k.is_categorical
             else {"kind": k.kind, "cardinality": k.cardinality}
             for k in tree.feature_kinds]
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "task": tree.task,
        "n_features": tree.n_features,
        "n_classes": tree.n_classes,
        "feature_kinds": kinds,
        "class_labels": tree.class_labels,
        "nodes": {
            "left_child": tree.left_child.tolist(),
            "right_child": tree.right_child.tolist(),
            "children": [c if c is None else list(c) for c in tree.children],
            "feature": tree.feature.tolist(),
            "threshold": [None if math.isnan(v) else v for v in tree.threshold.tolist()],
            "impurity": tree.impurity.tolist(),
            "n_node_samples": tree.n_node_samples.tolist(),
            "value": tree.value.tolist(),
        },
    }


def serialize(tree: TreeArrays) -> bytes:
    return json.dumps(tree_to_doc(tree), separators=(",", ":")).encode("utf-8")


def tree_from_doc(doc: dict) -> TreeArrays:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a tree document")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported tree format version {doc.get('version')!r}")
    try:
        kinds = [FeatureKind(k["kind"], k.get("cardinality")) for k in doc["feature_kinds"]]
        nodes = doc["nodes"]
        tree = TreeArrays(doc["task"], doc["n_features"], doc["n_classes"], kinds,
                          doc.get("class_labels"))
        n = len(nodes["feature"])
        for key in ("left_child", "right_child", "children", "threshold",
                    "impurity", "n_node_samples", "value"):
            if len(nodes[key]) != n:
                raise ModelFormatError(f"node array {key!r} has inconsistent length")
        tree._left = list(nodes["left_child"])
        tree._right = list(nodes["right_child"])
        tree._children = [c if c is None else list(c) for c in nodes["children"]]
        tree._feature = list(nodes["feature"])
        tree._threshold = [math.nan if v is None else float(v) for v in nodes["threshold"]]
        tree._impurity = [float(v) for v in nodes["impurity"]]
        tree._n_node = [float(v) for v in nodes["n_node_samples"]]
        tree._value = [np.asarray(v, dtype=float) for v in nodes["value"]]
    except (KeyError, TypeError, IndexError) as exc:
        raise ModelFormatError(f"malformed tree document: {exc}") from exc
    tree.finalize()
    _validate_structure(tree)
    return tree


def deserialize(data: bytes) -> TreeArrays:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unparseable tree document: {exc}") from exc
    return tree_from_doc(doc)


def _validate_structure(tree: TreeArrays) -> None:
    n = tree.node_count
    if n == 0:
        raise ModelFormatError("tree document has no nodes")
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    while stack:
        t = stack.pop()
        if not 0 <= t < n:
            raise ModelFormatError(f"dangling child index {t}")
        if seen[t]:
            raise ModelFormatError(f"node {t} has more than one parent")
        seen[t] = True
        kids = tree.node_children(t)
        if tree.is_leaf(t):
            if kids:
                raise ModelFormatError(f"leaf {t} has children")
        else:
            if not kids:
                raise ModelFormatError(f"internal node {t} without children")
            if tree.children[t] is None and not math.isfinite(tree.threshold[t]):
                raise ModelFormatError(f"binary node {t} without threshold")
            if not 0 <= tree.feature[t] < tree.n_features:
                raise ModelFormatError(f"node {t} tests an unknown feature")
            stack.extend(kids)
    if not seen.all():
        orphan = int(np.flatnonzero(~seen)[0])
        raise ModelFormatError(f"node {orphan} is unreachable from the root")
    for t in range(n):
        if tree.impurity[t] < 0:
            raise ModelFormatError(f"node {t} has negative impurity")
        if not tree.is_leaf(t) and tree.children[t] is None:
            child_sum = tree.n_node_samples[tree.left_child[t]] + \
                tree.n_node_samples[tree.right_child[t]]
            if abs(child_sum - tree.n_node_samples[t]) > 1e-6:
                raise ModelFormatError(f"node {t} child sizes do not sum to the parent")
