"""Experiment harness: bias-variance decompositions, prediction-correlation
estimates, the ensemble variance law in M, average-depth checks, plug-in MI
bias, and timing/depth/error sweeps."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .dataset import (
    Dataset,
    friedman1_function,
    gen_friedman1,
    gen_linear_gaussian,
    linear_gaussian_function,
)
from .forest import Forest, ForestConfig, fit, predict_ensemble_batch
from .tree import mean_leaf_depth, predict_batch


@dataclass
class SyntheticProblem:
    """A regression generator whose noiseless target (Bayes model) is known."""

    name: str
    noise_sd: float
    sample: object  # (n, seed) -> Dataset
    bayes: object  # (X matrix) -> noiseless targets


def friedman1_problem(p_total: int = 10, noise_sd: float = 1.0) -> SyntheticProblem:
    return SyntheticProblem(
        name="friedman1",
        noise_sd=noise_sd,
        sample=lambda n, seed: gen_friedman1(n, p_total, noise_sd, seed),
        bayes=friedman1_function,
    )


def linear_gaussian_problem(p_noise: int = 5) -> SyntheticProblem:
    return SyntheticProblem(
        name="linear-gaussian",
        noise_sd=0.0,
        sample=lambda n, seed: gen_linear_gaussian(n, p_noise, seed),
        bayes=linear_gaussian_function,
    )


@dataclass
class BiasVarianceReport:
    noise: float
    bias_sq: float
    variance: float
    total: float  # directly measured expected squared error
    rho: float | None
    n_models: int
    n_replicates: int


@dataclass
class DepthReport:
    mean_leaf_depth: float  # sample-weighted, root counted at depth 1
    n_trees: int
    n_samples: int


@dataclass
class MiBiasReport:
    mean_estimate: float
    expected: float  # (|X|-1)(|Y|-1) / (2 N ln 2)
    card_x: int
    card_y: int
    node_size: int
    n_trials: int


@dataclass
class VarianceCurve:
    m_grid: list
    variance: np.ndarray
    a: float  # fitted floor rho * sigma^2
    b: float  # fitted 1/M coefficient (1 - rho) * sigma^2
    r_squared: float
    residuals: np.ndarray

    @property
    def rho_implied(self) -> float:
        return self.a / (self.a + self.b)


@dataclass
class SweepRow:
    axis: str
    value: float
    fit_seconds: float
    mean_depth: float
    holdout_error: float


def _derive_seed(*parts) -> int:
    return int(np.random.default_rng(list(parts)).integers(2**31))


def forest_learner(cfg: ForestConfig):
    """Adapter turning a ForestConfig into a (ds, seed) -> predict(X) learner."""

    def fit_fn(ds: Dataset, seed: int):
        forest = fit(ds, dc_replace(cfg, seed=seed))
        return lambda X: predict_ensemble_batch(forest, X)

    return fit_fn


def _as_learner(learner):
    if isinstance(learner, ForestConfig):
        return forest_learner(learner), learner.n_trees
    return learner, 1


def _test_points(problem: SyntheticProblem, n_test: int, seed: int):
    ds = problem.sample(n_test, seed)
    X = np.column_stack(ds.features)
    f = problem.bayes(X) if problem.bayes is not None else None
    return X, f


def bias_variance(problem: SyntheticProblem, learner, n_sets: int = 100,
                  n_train: int = 100, n_test: int = 500, seed: int = 0) -> BiasVarianceReport:
    """Monte-Carlo noise / squared-bias / variance decomposition at fresh test
    points, with the expected squared error also measured directly so the
    additive closure can be checked."""
    if problem.bayes is None:
        raise ValueError("bias_variance needs a generator with a known noiseless target")
    fit_fn, n_models = _as_learner(learner)
    X_test, f_test = _test_points(problem, n_test, _derive_seed(seed, 9999))
    preds = np.empty((n_sets, n_test))
    rng = np.random.default_rng([seed, 7])
    total_acc = 0.0
    for i in range(n_sets):
        ds = problem.sample(n_train, _derive_seed(seed, 1, i))
        predict = fit_fn(ds, _derive_seed(seed, 2, i))
        preds[i] = np.asarray(predict(X_test), dtype=float)
        y_fresh = f_test + rng.normal(0.0, problem.noise_sd, size=n_test) \
            if problem.noise_sd else f_test
        total_acc += float(np.mean((y_fresh - preds[i]) ** 2))
    mean_pred = preds.mean(axis=0)
    bias_sq = float(np.mean((f_test - mean_pred) ** 2))
    variance = float(np.mean((preds - mean_pred) ** 2))
    return BiasVarianceReport(
        noise=problem.noise_sd**2,
        bias_sq=bias_sq,
        variance=variance,
        total=total_acc / n_sets,
        rho=None,
        n_models=n_models,
        n_replicates=n_sets,
    )


def rho_estimate(problem: SyntheticProblem, learner, n_sets: int = 50,
                 n_seeds_per_set: int = 8, n_train: int = 100, n_test: int = 200,
                 seed: int = 0) -> float:
    """Correlation between same-data different-seed predictions, via the
    variance-ratio form Var_L(E_seed) / (Var_L(E_seed) + E_L Var_seed).

    The learning-set variance term is debiased by Var_seed / S before the
    ratio, so a seed-insensitive learner reads 1 and pure per-seed noise
    reads ~0; each test point's ratio lies in [0, 1] by construction.
    """
    fit_fn, _ = _as_learner(learner)
    X_test, _ = _test_points(problem, n_test, _derive_seed(seed, 9998))
    preds = np.empty((n_sets, n_seeds_per_set, n_test))
    for i in range(n_sets):
        ds = problem.sample(n_train, _derive_seed(seed, 3, i))
        for s in range(n_seeds_per_set):
            predict = fit_fn(ds, _derive_seed(seed, 4, i, s))
            preds[i, s] = np.asarray(predict(X_test), dtype=float)
    seed_means = preds.mean(axis=1)  # (n_sets, n_test)
    var_learning = seed_means.var(axis=0, ddof=1)
    var_seed = preds.var(axis=1, ddof=1).mean(axis=0)
    numer = np.maximum(var_learning - var_seed / n_seeds_per_set, 0.0)
    denom = numer + var_seed
    valid = denom > 0
    if not valid.any():
        return 1.0  # constant predictions everywhere
    return float(np.mean(numer[valid] / denom[valid]))


def variance_vs_M(problem: SyntheticProblem, cfg: ForestConfig, m_grid,
                  n_replicates: int = 60, n_train: int = 150, n_test: int = 200,
                  seed: int = 0) -> VarianceCurve:
    """Measured ensemble variance at each M with a least-squares a + b/M fit.

    Each replicate trains max(m_grid) trees once; ensembles for smaller M
    are prefixes of the same forest, which leaves each point unbiased.
    """
    m_grid = sorted(int(m) for m in m_grid)
    m_max = m_grid[-1]
    X_test, _ = _test_points(problem, n_test, _derive_seed(seed, 9997))
    ens = np.empty((n_replicates, len(m_grid), n_test))
    for r in range(n_replicates):
        ds = problem.sample(n_train, _derive_seed(seed, 5, r))
        forest = fit(ds, dc_replace(cfg, n_trees=m_max, seed=_derive_seed(seed, 6, r)))
        tree_preds = np.stack([predict_batch(t, X_test) for t in forest.trees])
        csum = np.cumsum(tree_preds, axis=0)
        for gi, m in enumerate(m_grid):
            ens[r, gi] = csum[m - 1] / m
    variance = ens.var(axis=0, ddof=1).mean(axis=1)
    design = np.column_stack([np.ones(len(m_grid)), 1.0 / np.asarray(m_grid, dtype=float)])
    coef, *_ = np.linalg.lstsq(design, variance, rcond=None)
    fitted = design @ coef
    residuals = variance - fitted
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((variance - variance.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return VarianceCurve(m_grid=m_grid, variance=variance, a=float(coef[0]),
                         b=float(coef[1]), r_squared=r_squared, residuals=residuals)


def depth_experiment(n_samples: int, n_trees: int = 500, seed: int = 0) -> DepthReport:
    """Average leaf depth of fully developed single-feature random-threshold
    trees on equally spaced values; the harmonic law predicts 2 H_N - 1.

    A uniform threshold over the value range makes every left/right size
    split equiprobable, so only subtree sizes need simulating.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    grand_total = 0.0
    for _ in range(n_trees):
        # sum of node sizes == sum over samples of leaf depth (root depth 1)
        stack = [n_samples]
        total = 0
        while stack:
            n = stack.pop()
            total += n
            if n >= 2:
                nu = rng.uniform(0.0, n - 1.0)
                left = int(nu) + 1
                stack.append(left)
                stack.append(n - left)
        grand_total += total / n_samples
    return DepthReport(mean_leaf_depth=grand_total / n_trees,
                       n_trees=n_trees, n_samples=n_samples)


def harmonic_depth(n: int) -> float:
    """2 H_n - 1, the expected average leaf depth at size n."""
    return 2.0 * float(np.sum(1.0 / np.arange(1, n + 1))) - 1.0


def plugin_mi(counts: np.ndarray) -> float:
    """Plug-in mutual information (bits) of a 2-D contingency table."""
    n = counts.sum()
    pxy = counts / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    mask = pxy > 0
    ratio = pxy[mask] / (px @ py)[mask]
    return float(np.sum(pxy[mask] * np.log2(ratio)))


def mi_bias_check(card_x: int, card_y: int, node_size: int, n_trials: int = 2000,
                  seed: int = 0) -> MiBiasReport:
    """Mean plug-in MI between independent uniform variables versus the
    (|X|-1)(|Y|-1) / (2 N ln 2) small-sample bias law."""
    rng = np.random.default_rng(seed)
    acc = 0.0
    for _ in range(n_trials):
        xs = rng.integers(0, card_x, size=node_size)
        ys = rng.integers(0, card_y, size=node_size)
        counts = np.bincount(xs * card_y + ys, minlength=card_x * card_y)
        acc += plugin_mi(counts.reshape(card_x, card_y).astype(float))
    expected = (card_x - 1) * (card_y - 1) / (2.0 * node_size * math.log(2.0))
    return MiBiasReport(mean_estimate=acc / n_trials, expected=expected,
                        card_x=card_x, card_y=card_y, node_size=node_size,
                        n_trials=n_trials)


def forest_mean_depth(forest: Forest) -> float:
    return float(np.mean([mean_leaf_depth(t) for t in forest.trees]))


def scaling_sweep(axis: str, grid, cfg: ForestConfig, n_train: int = 300,
                  n_test: int = 1000, p_total: int = 10, noise_sd: float = 1.0,
                  seed: int = 0):
    """Wall-clock fit time, mean depth and held-out error across one axis.

    Timing rows are informational; only the M-linearity is robust enough
    to assert on.
    """
    if axis not in ("N", "p", "K", "M"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    rows = []
    forest_seed = _derive_seed(seed, 8)  # shared: M-axis runs share tree prefixes
    for value in grid:
        value = int(value)
        n = value if axis == "N" else n_train
        p = value if axis == "p" else p_total
        run_cfg = dc_replace(cfg, seed=forest_seed)
        if axis == "K":
            run_cfg = dc_replace(run_cfg, base=dc_replace(cfg.base, k_features=value))
        if axis == "M":
            run_cfg = dc_replace(run_cfg, n_trees=value)
        train = gen_friedman1(n, p, noise_sd, _derive_seed(seed, 9, value))
        test = gen_friedman1(n_test, p, noise_sd, _derive_seed(seed, 10, value))
        start = time.perf_counter()
        forest = fit(train, run_cfg)
        elapsed = time.perf_counter() - start
        pred = predict_ensemble_batch(forest, np.column_stack(test.features))
        err = float(np.mean((pred - test.targets) ** 2))
        rows.append(SweepRow(axis=axis, value=float(value), fit_seconds=elapsed,
                             mean_depth=forest_mean_depth(forest), holdout_error=err))
    return rows
