from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from patchwood.dataset import Dataset, DiscreteJoint, gen_led, joint_from_dataset
from patchwood.tree import tree_from_doc

settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")


def reference_tree_doc() -> dict:
    """Hand-written serialized form of the 9-node, 300-sample, two-feature
    classification tree used as the prediction/consistency fixture.

    Node 0 splits on the second feature at 0.303; its left child (node 1)
    holds 99 samples of the first class only.
    """
    return {
        "format": "pwtree",
        "version": 1,
        "task": "classification",
        "n_features": 2,
        "n_classes": 2,
        "feature_kinds": [{"kind": "ordered"}, {"kind": "ordered"}],
        "class_labels": ["c1", "c2"],
        "nodes": {
            "left_child": [1, -1, 3, 5, -1, -1, 7, -1, -1],
            "right_child": [2, -1, 4, 6, -1, -1, 8, -1, -1],
            "children": [None] * 9,
            "feature": [1, -1, 1, 0, -1, -1, 0, -1, -1],
            "threshold": [0.303, None, 0.696, 0.296, None, None, 0.703, None, None],
            "impurity": [0.273, 0.0, 0.368, 0.482, 0.065, 0.051, 0.48, 0.042, 0.0],
            "n_node_samples": [300.0, 99.0, 201.0, 113.0, 88.0, 38.0, 75.0, 46.0, 29.0],
            "value": [[251.0, 49.0], [99.0, 0.0], [152.0, 49.0], [67.0, 46.0],
                      [85.0, 3.0], [37.0, 1.0], [30.0, 45.0], [1.0, 45.0],
                      [29.0, 0.0]],
        },
    }


@pytest.fixture
def reference_tree():
    return tree_from_doc(reference_tree_doc())


@pytest.fixture
def led_exhaustive() -> Dataset:
    return gen_led(10)


@pytest.fixture
def led_joint_table(led_exhaustive) -> DiscreteJoint:
    return joint_from_dataset(led_exhaustive)


def toy_ternary_dataset() -> Dataset:
    """Three equiprobable rows: a ternary ordered input, a binary copy of y."""
    return Dataset(
        features=[np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 1.0])],
        targets=np.array([0, 1, 1]),
        weights=np.ones(3),
        task="classification",
        n_classes=2,
    )


@pytest.fixture
def toy_ternary() -> Dataset:
    return toy_ternary_dataset()


def xor_joint() -> DiscreteJoint:
    """Two binary uniform inputs, y = x1 XOR x2."""
    prob = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            prob[a, b, a ^ b] = 0.25
    return DiscreteJoint((2, 2), 2, prob)


def random_joint(rng, p=None, max_card=3, max_classes=3) -> DiscreteJoint:
    """Dense random joint with strictly positive cells."""
    if p is None:
        p = int(rng.integers(2, 5))
    cards = tuple(int(rng.integers(2, max_card + 1)) for _ in range(p))
    n_classes = int(rng.integers(2, max_classes + 1))
    table = rng.random(cards + (n_classes,)) ** 2 + 1e-3
    return DiscreteJoint(cards, n_classes, table / table.sum())


def subset_entropy_oracle(prob: np.ndarray, axes) -> float:
    """Independent brute-force H over the given axes of a joint table."""
    keep = tuple(sorted(axes))
    drop = tuple(i for i in range(prob.ndim) if i not in keep)
    marg = prob.sum(axis=drop) if drop else prob
    total = 0.0
    for v in np.ravel(marg):
        if v > 0:
            total -= v * np.log2(v)
    return total
