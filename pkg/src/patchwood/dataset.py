"""Column-oriented data model, CSV ingestion and synthetic problem generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"


class DataError(ValueError):
    """Raised for malformed input data or incompatible dataset operations."""


@dataclass(frozen=True)
class FeatureKind:
    """Kind of a feature column: totally ordered reals or a finite category set."""

    kind: str  # "ordered" | "categorical"
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind not in ("ordered", "categorical"):
            raise DataError(f"unknown feature kind {self.kind!r}")
        if self.kind == "categorical" and (self.cardinality is None or self.cardinality < 1):
            raise DataError("categorical features need a positive cardinality")

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"


def ordered() -> FeatureKind:
    return FeatureKind("ordered")


def categorical(cardinality: int) -> FeatureKind:
    return FeatureKind("categorical", cardinality)


@dataclass
class Dataset:
    """Immutable column-oriented sample matrix with targets and weights.

    ``features`` holds one contiguous array per column so repeated
    per-feature scans during split search stay cache friendly.  Categorical
    columns store dense integer codes; the code <-> label maps live in
    ``feature_labels`` / ``class_labels`` for round-tripping.
    """

    features: list  # one np.ndarray per column
    targets: np.ndarray
    weights: np.ndarray
    task: str
    n_classes: int | None = None
    feature_kinds: list = field(default_factory=list)
    feature_names: list = field(default_factory=list)
    class_labels: list | None = None
    feature_labels: list | None = None  # per column: None or list of labels

    def __post_init__(self):
        n = len(self.targets)
        for col in self.features:
            if len(col) != n:
                raise DataError("all feature columns must match the target length")
        if len(self.weights) != n:
            raise DataError("weights must match the target length")
        if np.any(self.weights < 0):
            raise DataError("weights must be nonnegative")
        if not self.feature_kinds:
            self.feature_kinds = [ordered() for _ in self.features]
        if not self.feature_names:
            self.feature_names = [f"x{j + 1}" for j in range(len(self.features))]
        if self.task == CLASSIFICATION:
            if self.n_classes is None:
                raise DataError("classification datasets need n_classes")
            if n and int(self.targets.max()) >= self.n_classes:
                raise DataError("classification target out of range")
        for j, kind in enumerate(self.feature_kinds):
            if kind.is_categorical and len(self.features[j]):
                col = self.features[j]
                if col.min() < 0 or col.max() >= kind.cardinality:
                    raise DataError(f"categorical codes of column {j} out of range")

    @property
    def n_samples(self) -> int:
        return len(self.targets)

    @property
    def n_features(self) -> int:
        return len(self.features)

    def column(self, j: int) -> np.ndarray:
        return self.features[j]

    def row(self, i: int) -> np.ndarray:
        return np.array([self.features[j][i] for j in range(self.n_features)])

    def with_weights(self, weights) -> "Dataset":
        """Same data, different weights (columns shared, not copied)."""
        return replace(self, weights=np.asarray(weights, dtype=float))

    def select(self, rows=None, columns=None) -> "Dataset":
        """Row / column subset; column arrays are copied only on row slicing."""
        cols = list(range(self.n_features)) if columns is None else list(columns)
        feats = [self.features[j] for j in cols]
        kinds = [self.feature_kinds[j] for j in cols]
        names = [self.feature_names[j] for j in cols]
        flabels = None if self.feature_labels is None else [self.feature_labels[j] for j in cols]
        targets, weights = self.targets, self.weights
        if rows is not None:
            rows = np.asarray(rows)
            feats = [c[rows] for c in feats]
            targets = targets[rows]
            weights = weights[rows]
        return Dataset(features=feats, targets=targets, weights=weights,
                       task=self.task, n_classes=self.n_classes,
                       feature_kinds=kinds, feature_names=names,
                       class_labels=self.class_labels, feature_labels=flabels)


@dataclass
class DiscreteJoint:
    """Dense joint probability table P(x_1, ..., x_p, y)."""

    cardinalities: tuple
    n_classes: int
    prob: np.ndarray

    def __post_init__(self):
        expected = tuple(self.cardinalities) + (self.n_classes,)
        if self.prob.shape != expected:
            raise DataError(f"prob table shape {self.prob.shape} != {expected}")
        if np.any(self.prob < 0):
            raise DataError("prob table entries must be nonnegative")
        if abs(float(self.prob.sum()) - 1.0) > 1e-12:
            raise DataError("prob table must sum to 1 within 1e-12")

    @property
    def n_variables(self) -> int:
        return len(self.cardinalities)


@dataclass
class CsvSchema:
    """Column roles for CSV ingestion.

    ``kinds`` maps column names to "ordered" / "categorical"; unmapped
    columns are inferred (non-numeric values imply categorical).
    """

    target: str
    task: str | None = None  # None = infer (non-numeric target => classification)
    kinds: dict = field(default_factory=dict)
    weight: str | None = None


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Load an RFC-4180-style CSV (header required, UTF-8) into a Dataset."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: no rows") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no rows")
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: ragged row {i + 2} has {len(row)} fields, expected {width}")
    if schema.target not in header:
        raise DataError(f"{path}: target column {schema.target!r} not in header")
    if schema.weight is not None and schema.weight not in header:
        raise DataError(f"{path}: weight column {schema.weight!r} not in header")

    target_idx = header.index(schema.target)
    weight_idx = header.index(schema.weight) if schema.weight is not None else None
    feat_idx = [i for i in range(width) if i not in (target_idx, weight_idx)]

    features, kinds, labels_per_col = [], [], []
    for i in feat_idx:
        name = header[i]
        tokens = [row[i] for row in rows]
        declared = schema.kinds.get(name)
        numeric = all(_is_float(t) for t in tokens)
        if declared is None:
            declared = "ordered" if numeric else "categorical"
        if declared == "ordered":
            if not numeric:
                bad = next(t for t in tokens if not _is_float(t))
                raise DataError(f"{path}: non-numeric value {bad!r} in ordered column {name!r}")
            features.append(np.array([float(t) for t in tokens]))
            kinds.append(ordered())
            labels_per_col.append(None)
        else:
            codes, labels = _encode(tokens)
            features.append(codes)
            kinds.append(categorical(len(labels)))
            labels_per_col.append(labels)

    target_tokens = [row[target_idx] for row in rows]
    task = schema.task
    if task is None:
        task = REGRESSION if all(_is_float(t) for t in target_tokens) else CLASSIFICATION
    if task == REGRESSION:
        if not all(_is_float(t) for t in target_tokens):
            raise DataError(f"{path}: non-numeric regression target")
        targets = np.array([float(t) for t in target_tokens])
        n_classes, class_labels = None, None
    else:
        codes, class_labels = _encode(target_tokens)
        targets = codes
        n_classes = len(class_labels)

    if weight_idx is None:
        weights = np.ones(len(rows))
    else:
        tokens = [row[weight_idx] for row in rows]
        if not all(_is_float(t) for t in tokens):
            raise DataError(f"{path}: non-numeric weight")
        weights = np.array([float(t) for t in tokens])

    return Dataset(features=features, targets=targets, weights=weights,
                   task=task, n_classes=n_classes, feature_kinds=kinds,
                   feature_names=[header[i] for i in feat_idx],
                   class_labels=class_labels, feature_labels=labels_per_col)


def _encode(tokens):
    """Dense integer codes in first-appearance order."""
    labels, mapping = [], {}
    codes = np.empty(len(tokens), dtype=np.int64)
    for i, t in enumerate(tokens):
        if t not in mapping:
            mapping[t] = len(labels)
            labels.append(t)
        codes[i] = mapping[t]
    return codes, labels


def save_csv(ds: Dataset, path, weight_column: str | None = None) -> None:
    """Write a Dataset back to CSV; inverse of load_csv on the same schema."""
    header = list(ds.feature_names) + [_target_name(ds)]
    if weight_column is not None:
        header.append(weight_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n_samples):
            row = []
            for j in range(ds.n_features):
                v = ds.features[j][i]
                if ds.feature_labels is not None and ds.feature_labels[j] is not None:
                    row.append(ds.feature_labels[j][int(v)])
                elif ds.feature_kinds[j].is_categorical:
                    row.append(str(int(v)))
                else:
                    row.append(repr(float(v)))
            if ds.task == CLASSIFICATION:
                y = int(ds.targets[i])
                row.append(ds.class_labels[y] if ds.class_labels else str(y))
            else:
                row.append(repr(float(ds.targets[i])))
            if weight_column is not None:
                row.append(repr(float(ds.weights[i])))
            writer.writerow(row)


def _target_name(ds: Dataset) -> str:
    return "y" if "y" not in ds.feature_names else "target"


# ---------------------------------------------------------------------------
# Synthetic problems

#: Seven-segment display: bit pattern of segments x1..x7 lit for each digit.
LED_PATTERNS = np.array([
    [1, 1, 1, 0, 1, 1, 1],  # 0
    [0, 0, 1, 0, 0, 1, 0],  # 1
    [1, 0, 1, 1, 1, 0, 1],  # 2
    [1, 0, 1, 1, 0, 1, 1],  # 3
    [0, 1, 1, 1, 0, 1, 0],  # 4
    [1, 1, 0, 1, 0, 1, 1],  # 5
    [1, 1, 0, 1, 1, 1, 1],  # 6
    [1, 0, 1, 0, 0, 1, 0],  # 7
    [1, 1, 1, 1, 1, 1, 1],  # 8
    [1, 1, 1, 1, 0, 1, 1],  # 9
], dtype=np.int64)


def gen_led(n: int, seed=None) -> Dataset:
    """Digit recognition from 7 binary segment indicators.

    ``n == 10`` is exhaustive mode: exactly one row per digit (seed ignored),
    which together with uniform weights represents the full distribution.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    if n == 10:
        digits = np.arange(10)
    else:
        digits = np.random.default_rng(seed).integers(0, 10, size=n)
    cols = [LED_PATTERNS[digits, j] for j in range(7)]
    return Dataset(features=cols, targets=digits.astype(np.int64),
                   weights=np.ones(n), task=CLASSIFICATION, n_classes=10,
                   feature_kinds=[categorical(2) for _ in range(7)])


def friedman1_function(X: np.ndarray) -> np.ndarray:
    """Noiseless regression surface of the Friedman #1 problem.

    Only the first five inputs matter; note the 0.48 offset in the
    quadratic term.
    """
    return (10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
            + 20.0 * (X[:, 2] - 0.48) ** 2
            + 10.0 * X[:, 3] + 5.0 * X[:, 4])


def gen_friedman1(n: int, p_total: int = 10, noise_sd: float = 1.0, seed=None) -> Dataset:
    """Friedman #1: p_total iid U[0,1] inputs, 5 relevant, Gaussian noise."""
    if p_total < 5:
        raise DataError("friedman1 needs p_total >= 5")
    rng = np.random.default_rng(seed)
    X = rng.random((n, p_total))
    y = friedman1_function(X)
    if noise_sd:
        y = y + rng.normal(0.0, noise_sd, size=n)
    return Dataset(features=[X[:, j].copy() for j in range(p_total)],
                   targets=y, weights=np.ones(n), task=REGRESSION)


def linear_gaussian_function(X: np.ndarray) -> np.ndarray:
    return X[:, :5].sum(axis=1)


def gen_linear_gaussian(n: int, p_noise: int = 5, seed=None) -> Dataset:
    """Y = X1 + ... + X5 with standard normal inputs plus p_noise irrelevant ones."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 5 + p_noise))
    y = linear_gaussian_function(X)
    return Dataset(features=[X[:, j].copy() for j in range(5 + p_noise)],
                   targets=y, weights=np.ones(n), task=REGRESSION)


def duplicate_feature(ds: Dataset, j: int, n_copies: int) -> Dataset:
    """Append n_copies exact value-copies of column j."""
    if not 0 <= j < ds.n_features:
        raise DataError(f"feature index {j} out of range")
    feats = list(ds.features) + [ds.features[j] for _ in range(n_copies)]
    kinds = list(ds.feature_kinds) + [ds.feature_kinds[j]] * n_copies
    names = list(ds.feature_names) + [f"{ds.feature_names[j]}_copy{c + 1}" for c in range(n_copies)]
    flabels = None
    if ds.feature_labels is not None:
        flabels = list(ds.feature_labels) + [ds.feature_labels[j]] * n_copies
    return Dataset(features=feats, targets=ds.targets, weights=ds.weights,
                   task=ds.task, n_classes=ds.n_classes, feature_kinds=kinds,
                   feature_names=names, class_labels=ds.class_labels,
                   feature_labels=flabels)


def joint_from_dataset(ds: Dataset) -> DiscreteJoint:
    """Weighted empirical joint distribution of an all-categorical dataset."""
    if ds.task != CLASSIFICATION:
        raise DataError("joint_from_dataset needs a classification task")
    for j, kind in enumerate(ds.feature_kinds):
        if not kind.is_categorical:
            raise DataError(f"column {j} is ordered; the joint table needs categorical features")
    cards = tuple(k.cardinality for k in ds.feature_kinds)
    table = np.zeros(cards + (ds.n_classes,))
    index = tuple(ds.features[j].astype(np.intp) for j in range(ds.n_features))
    np.add.at(table, index + (ds.targets.astype(np.intp),), ds.weights)
    total = table.sum()
    if total <= 0:
        raise DataError("total weight must be positive")
    return DiscreteJoint(cardinalities=cards, n_classes=ds.n_classes, prob=table / total)


def led_joint() -> DiscreteJoint:
    """Exact joint distribution of the 7-segment digit problem."""
    return joint_from_dataset(gen_led(10))
