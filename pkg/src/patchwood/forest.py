"""Ensembles of randomized trees: bagging, Pasting, Random Subspaces and
Random Patches, with aggregation, out-of-bag estimates and proximities.

Trees are built independently on per-tree random streams derived from
(master seed, tree index), so a fit is reproducible regardless of the
thread count.  Bootstrap resampling is realized as integer multiplicity
weights on the original rows; row/column patches as zeroed weights plus a
column-subset view whose trained tree is remapped to global feature ids.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import CLASSIFICATION, DataError, Dataset, FeatureKind
from .tree import (
    BuildConfig,
    FORMAT_VERSION,
    ModelFormatError,
    apply_batch,
    build,
    predict_batch,
    tree_from_doc,
    tree_to_doc,
)

AGGREGATIONS = ("average", "soft_vote", "majority")

FOREST_FORMAT = "pwforest"


@dataclass(frozen=True)
class Sampling:
    """Row/column randomization applied before each tree build."""

    mode: str = "none"  # "none" | "bootstrap" | "patch"
    alpha_s: float = 1.0
    alpha_f: float = 1.0

    def __post_init__(self):
        if self.mode not in ("none", "bootstrap", "patch"):
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if not (0.0 < self.alpha_s <= 1.0 and 0.0 < self.alpha_f <= 1.0):
            raise ValueError("patch fractions must lie in (0, 1]")


def no_sampling() -> Sampling:
    return Sampling("none")


def bootstrap() -> Sampling:
    return Sampling("bootstrap")


def patch(alpha_s: float, alpha_f: float) -> Sampling:
    return Sampling("patch", alpha_s, alpha_f)


def random_subspace(alpha_f: float) -> Sampling:
    """Feature-only subsampling: the alpha_s = 1 degeneracy of a patch."""
    return Sampling("patch", 1.0, alpha_f)


def pasting(alpha_s: float) -> Sampling:
    """Sample-only subsampling without replacement: the alpha_f = 1 degeneracy."""
    return Sampling("patch", alpha_s, 1.0)


@dataclass
class ForestConfig:
    n_trees: int = 100
    sampling: Sampling = field(default_factory=no_sampling)
    base: BuildConfig = field(default_factory=BuildConfig)
    aggregation: str | None = None  # default: average (regression) / soft_vote
    seed: int = 0
    n_threads: int = 1

    def validate(self, task: str) -> None:
        if self.n_trees < 1:
            raise ValueError("a forest needs at least one tree")
        if self.aggregation is not None and self.aggregation not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if task != CLASSIFICATION and self.aggregation in ("majority", "soft_vote"):
            raise ValueError("majority/soft voting require a classification task")
        if task == CLASSIFICATION and self.aggregation == "average":
            raise ValueError("average aggregation requires a regression task")
        self.base.validate()

    def resolved_aggregation(self, task: str) -> str:
        if self.aggregation is not None:
            return self.aggregation
        return "soft_vote" if task == CLASSIFICATION else "average"


@dataclass
class InBag:
    """Exact record of the rows a tree was trained on."""

    kind: str  # "bootstrap" -> multiplicities, "patch" -> sorted row indices
    data: np.ndarray
    n_samples: int

    def multiplicity(self) -> np.ndarray:
        if self.kind == "bootstrap":
            return self.data
        out = np.zeros(self.n_samples, dtype=np.int64)
        out[self.data] = 1
        return out

    def oob_mask(self) -> np.ndarray:
        return self.multiplicity() == 0

    def distinct_fraction(self) -> float:
        return float(np.count_nonzero(self.multiplicity()) / self.n_samples)


@dataclass
class Forest:
    trees: list
    feature_subsets: list  # per tree: None (identity) or sorted global indices
    inbag: list  # per tree: InBag or None
    config: ForestConfig
    task: str
    n_features: int
    n_classes: int | None
    feature_kinds: list
    class_labels: list | None = None
    feature_names: list | None = None
    feature_labels: list | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def draw_patch(n_samples: int, n_features: int, alpha_s: float, alpha_f: float, rng):
    """ceil(alpha_s * N) rows and ceil(alpha_f * p) columns, uniform without
    replacement, both sorted ascending for reproducibility."""
    if not (0.0 < alpha_s <= 1.0 and 0.0 < alpha_f <= 1.0):
        raise ValueError("patch fractions must lie in (0, 1]")
    n_rows = min(n_samples, max(1, math.ceil(alpha_s * n_samples)))
    n_cols = min(n_features, max(1, math.ceil(alpha_f * n_features)))
    rows = np.sort(rng.choice(n_samples, size=n_rows, replace=False))
    cols = np.sort(rng.choice(n_features, size=n_cols, replace=False))
    return rows, cols


def _tree_rng(seed: int, index: int):
    # counter-based derivation: stream identity depends only on (seed, index)
    return np.random.default_rng([seed, index])


def _fit_one(ds: Dataset, cfg: ForestConfig, m: int):
    rng = _tree_rng(cfg.seed, m)
    sampling = cfg.sampling
    if sampling.mode == "none":
        tree = build(ds, cfg.base, rng)
        return tree, None, None
    if sampling.mode == "bootstrap":
        n = ds.n_samples
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
        tree = build(ds.with_weights(ds.weights * counts), cfg.base, rng)
        return tree, None, InBag("bootstrap", counts, n)
    rows, cols = draw_patch(ds.n_samples, ds.n_features, sampling.alpha_s,
                            sampling.alpha_f, rng)
    mask = np.zeros(ds.n_samples)
    mask[rows] = 1.0
    sub = ds.select(columns=cols).with_weights(ds.weights * mask)
    tree = build(sub, cfg.base, rng)
    tree.remap_features(cols, ds.n_features, ds.feature_kinds)
    subset = None if len(cols) == ds.n_features else cols
    return tree, subset, InBag("patch", rows, ds.n_samples)


def fit(ds: Dataset, cfg: ForestConfig) -> Forest:
    """Fit the M trees independently (embarrassingly parallel)."""
    cfg.validate(ds.task)
    if cfg.n_threads <= 1:
        results = [_fit_one(ds, cfg, m) for m in range(cfg.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.n_threads) as pool:
            results = list(pool.map(lambda m: _fit_one(ds, cfg, m), range(cfg.n_trees)))
    trees = [r[0] for r in results]
    subsets = [r[1] for r in results]
    inbag = [r[2] for r in results]
    return Forest(trees=trees, feature_subsets=subsets, inbag=inbag, config=cfg,
                  task=ds.task, n_features=ds.n_features, n_classes=ds.n_classes,
                  feature_kinds=list(ds.feature_kinds), class_labels=ds.class_labels,
                  feature_names=list(ds.feature_names),
                  feature_labels=ds.feature_labels)


# ---------------------------------------------------------------------------
# Prediction and aggregation

def predict_ensemble(forest: Forest, x):
    """Aggregate the trees at a single point."""
    X = np.asarray(x, dtype=float)[None, :]
    if forest.task == CLASSIFICATION:
        probs, classes = predict_ensemble_batch(forest, X)
        return probs[0], int(classes[0])
    return float(predict_ensemble_batch(forest, X)[0])


def predict_ensemble_batch(forest: Forest, X):
    mode = forest.config.resolved_aggregation(forest.task)
    if forest.task != CLASSIFICATION:
        preds = np.stack([predict_batch(t, X) for t in forest.trees])
        return preds.mean(axis=0)
    if mode == "majority":
        n = np.asarray(X).shape[0] if not isinstance(X, Dataset) else X.n_samples
        votes = np.zeros((n, forest.n_classes))
        for t in forest.trees:
            _, cls = predict_batch(t, X)
            votes[np.arange(n), cls] += 1.0
        shares = votes / forest.n_trees
        return shares, np.argmax(shares, axis=1)
    acc = None
    for t in forest.trees:
        probs, _ = predict_batch(t, X)
        acc = probs if acc is None else acc + probs
    acc /= forest.n_trees
    return acc, np.argmax(acc, axis=1)


def oob_error(forest: Forest, ds: Dataset):
    """Out-of-bag error plus the per-sample count of contributing trees.

    Every sample is predicted only by trees whose in-bag record excludes
    it; uncovered samples are dropped from the average and reported via the
    coverage vector.
    """
    if any(b is None for b in forest.inbag):
        raise DataError("OOB undefined: the forest was fit without row sampling")
    n = ds.n_samples
    coverage = np.zeros(n, dtype=np.int64)
    if forest.task == CLASSIFICATION:
        acc = np.zeros((n, forest.n_classes))
        for tree, bag in zip(forest.trees, forest.inbag):
            oob = bag.oob_mask()
            if not oob.any():
                continue
            rows = np.flatnonzero(oob)
            probs, _ = predict_batch(tree, _rows_matrix(ds, rows))
            acc[rows] += probs
            coverage[rows] += 1
        covered = coverage > 0
        if not covered.any():
            raise DataError("no sample is out-of-bag for any tree")
        pred = np.argmax(acc[covered], axis=1)
        wrong = pred != ds.targets[covered]
        w = ds.weights[covered]
        return float(np.dot(w, wrong) / w.sum()), coverage
    acc = np.zeros(n)
    for tree, bag in zip(forest.trees, forest.inbag):
        oob = bag.oob_mask()
        if not oob.any():
            continue
        rows = np.flatnonzero(oob)
        acc[rows] += predict_batch(tree, _rows_matrix(ds, rows))
        coverage[rows] += 1
    covered = coverage > 0
    if not covered.any():
        raise DataError("no sample is out-of-bag for any tree")
    mean_pred = acc[covered] / coverage[covered]
    w = ds.weights[covered]
    sq = (mean_pred - ds.targets[covered]) ** 2
    return float(np.dot(w, sq) / w.sum()), coverage


def _rows_matrix(ds: Dataset, rows) -> np.ndarray:
    return np.column_stack([c[rows] for c in ds.features]).astype(float)


def proximity(forest: Forest, x1, x2) -> float:
    """Fraction of trees in which both points reach the same leaf."""
    X = np.vstack([np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)])
    same = 0
    for tree in forest.trees:
        leaves = apply_batch(tree, X)
        same += int(leaves[0] == leaves[1])
    return same / forest.n_trees


def proximity_matrix(forest: Forest, ds: Dataset) -> np.ndarray:
    X = _rows_matrix(ds, np.arange(ds.n_samples))
    out = np.zeros((ds.n_samples, ds.n_samples))
    for tree in forest.trees:
        leaves = apply_batch(tree, X)
        out += leaves[:, None] == leaves[None, :]
    return out / forest.n_trees


# ---------------------------------------------------------------------------
# Serialization

def forest_to_doc(forest: Forest) -> dict:
    cfg = forest.config
    kinds = [{"kind": k.kind} if not k.is_categorical
             else {"kind": k.kind, "cardinality": k.cardinality}
             for k in forest.feature_kinds]
    return {
        "format": FOREST_FORMAT,
        "version": FORMAT_VERSION,
        "task": forest.task,
        "n_features": forest.n_features,
        "n_classes": forest.n_classes,
        "feature_kinds": kinds,
        "class_labels": forest.class_labels,
        "feature_names": forest.feature_names,
        "feature_labels": forest.feature_labels,
        # n_threads is a runtime concern and deliberately not model state:
        # the same fit serializes identically whatever the worker count
        "config": {
            "n_trees": cfg.n_trees,
            "sampling": asdict(cfg.sampling),
            "base": asdict(cfg.base),
            "aggregation": cfg.aggregation,
            "seed": cfg.seed,
        },
        "feature_subsets": [None if s is None else np.asarray(s).tolist()
                            for s in forest.feature_subsets],
        "inbag": [None if b is None else
                  {"kind": b.kind, "data": np.asarray(b.data).tolist(), "n": b.n_samples}
                  for b in forest.inbag],
        "trees": [tree_to_doc(t) for t in forest.trees],
    }


def serialize_forest(forest: Forest) -> bytes:
    return json.dumps(forest_to_doc(forest), separators=(",", ":")).encode("utf-8")


def forest_from_doc(doc: dict) -> Forest:
    if not isinstance(doc, dict) or doc.get("format") != FOREST_FORMAT:
        raise ModelFormatError("not a forest document")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported forest format version {doc.get('version')!r}")
    try:
        cfg_doc = doc["config"]
        cfg = ForestConfig(
            n_trees=cfg_doc["n_trees"],
            sampling=Sampling(**cfg_doc["sampling"]),
            base=BuildConfig(**cfg_doc["base"]),
            aggregation=cfg_doc["aggregation"],
            seed=cfg_doc["seed"],
        )
        kinds = [FeatureKind(k["kind"], k.get("cardinality")) for k in doc["feature_kinds"]]
        trees = [tree_from_doc(d) for d in doc["trees"]]
        subsets = [None if s is None else np.asarray(s, dtype=np.int64)
                   for s in doc["feature_subsets"]]
        inbag = [None if b is None else
                 InBag(b["kind"], np.asarray(b["data"], dtype=np.int64), b["n"])
                 for b in doc["inbag"]]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed forest document: {exc}") from exc
    if len(trees) != cfg.n_trees or len(subsets) != cfg.n_trees or len(inbag) != cfg.n_trees:
        raise ModelFormatError("tree, subset and in-bag counts disagree")
    return Forest(trees=trees, feature_subsets=subsets, inbag=inbag, config=cfg,
                  task=doc["task"], n_features=doc["n_features"],
                  n_classes=doc["n_classes"], feature_kinds=kinds,
                  class_labels=doc.get("class_labels"),
                  feature_names=doc.get("feature_names"),
                  feature_labels=doc.get("feature_labels"))


def deserialize_forest(data: bytes) -> Forest:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unparseable forest document: {exc}") from exc
    return forest_from_doc(doc)
