"""Batch command-line interface.

Subcommands: gen-data, train, predict, importance, biasvar, depth-exp,
mi-bias, sweep.  Every run that names an output file writes a JSON manifest
next to it; re-running with the same inputs and flags reproduces outputs
byte-exactly, independent of --threads.  Exit codes: 2 bad arguments,
3 data error, 4 model error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    bias_variance,
    depth_experiment,
    friedman1_problem,
    harmonic_depth,
    linear_gaussian_problem,
    mi_bias_check,
    scaling_sweep,
)
from .criteria import CriterionError
from .dataset import (
    CLASSIFICATION,
    CsvSchema,
    DataError,
    Dataset,
    DiscreteJoint,
    gen_friedman1,
    gen_led,
    gen_linear_gaussian,
    led_joint,
    load_csv,
    save_csv,
)
from .forest import (
    Forest,
    ForestConfig,
    Sampling,
    deserialize_forest,
    fit,
    oob_error,
    predict_ensemble_batch,
    serialize_forest,
)
from .importance import (
    ImportanceReport,
    analytic_mdi_pruned,
    analytic_mdi_subspace,
    analytic_mdi_trt,
    mdi,
    permutation_importance,
)
from .splitter import SplitterError
from .tree import BuildConfig, ModelFormatError

ENV_SEED = "PATCHWOOD_SEED"


def _default_seed() -> int:
    return int(os.environ.get(ENV_SEED, "0"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchwood",
                                     description="randomized-tree ensembles with importance analysis")
    parser.add_argument("--version", action="version", version=f"patchwood {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    gen.add_argument("--problem", required=True,
                     choices=["led", "friedman1", "linear-gaussian"])
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--p-total", type=int, default=10)
    gen.add_argument("--p-noise", type=int, default=5)
    gen.add_argument("--noise-sd", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=_default_seed())
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_data)

    train = sub.add_parser("train", help="fit a forest on a CSV file")
    _data_flags(train)
    _forest_flags(train)
    train.add_argument("--out", required=True, help="model file (.pwforest)")
    train.set_defaults(func=cmd_train)

    pred = sub.add_parser("predict", help="predict a CSV with a trained model")
    pred.add_argument("--model", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--out", default=None, help="predictions CSV (default stdout)")
    pred.set_defaults(func=cmd_predict)

    imp = sub.add_parser("importance", help="variable importances")
    imp.add_argument("--method", required=True,
                     choices=["mdi", "permutation", "analytic-trt",
                              "analytic-pruned", "analytic-subspace"])
    imp.add_argument("--model", default=None, help="forest file (mdi / permutation)")
    imp.add_argument("--data", default=None, help="CSV for permutation importance")
    _data_schema_flags(imp)
    imp.add_argument("--joint", default=None,
                     help="'led' or a JSON joint-distribution file (analytic methods)")
    imp.add_argument("--depth", type=int, default=None, help="q for analytic-pruned")
    imp.add_argument("--subspace", type=int, default=None, help="q for analytic-subspace")
    imp.add_argument("--repeats", type=int, default=5)
    imp.add_argument("--decompose", action="store_true",
                     help="emit the p x p degree matrix")
    imp.add_argument("--normalize", action="store_true")
    imp.add_argument("--seed", type=int, default=_default_seed())
    imp.add_argument("--out", default=None)
    imp.set_defaults(func=cmd_importance)

    bv = sub.add_parser("biasvar", help="bias-variance decomposition")
    bv.add_argument("--problem", required=True, choices=["friedman1", "linear-gaussian"])
    bv.add_argument("--noise-sd", type=float, default=1.0)
    bv.add_argument("--p-total", type=int, default=10)
    bv.add_argument("--p-noise", type=int, default=5)
    bv.add_argument("--sets", type=int, default=50)
    bv.add_argument("--train-size", type=int, default=100)
    bv.add_argument("--test-size", type=int, default=500)
    _forest_flags(bv)
    bv.add_argument("--out", default=None)
    bv.set_defaults(func=cmd_biasvar)

    dx = sub.add_parser("depth-exp", help="average-depth law check")
    dx.add_argument("--n", type=int, required=True)
    dx.add_argument("--trees", type=int, default=500)
    dx.add_argument("--seed", type=int, default=_default_seed())
    dx.add_argument("--out", default=None)
    dx.set_defaults(func=cmd_depth_exp)

    mb = sub.add_parser("mi-bias", help="plug-in MI bias under independence")
    mb.add_argument("--card-x", type=int, required=True)
    mb.add_argument("--card-y", type=int, required=True)
    mb.add_argument("--node-size", type=int, required=True)
    mb.add_argument("--trials", type=int, default=2000)
    mb.add_argument("--seed", type=int, default=_default_seed())
    mb.add_argument("--out", default=None)
    mb.set_defaults(func=cmd_mi_bias)

    sw = sub.add_parser("sweep", help="timing/depth/error sweep along one axis")
    sw.add_argument("--axis", required=True, choices=["N", "p", "K", "M"])
    sw.add_argument("--grid", required=True, help="comma-separated values")
    sw.add_argument("--train-size", type=int, default=300)
    sw.add_argument("--test-size", type=int, default=1000)
    _forest_flags(sw)
    sw.add_argument("--out", default=None)
    sw.set_defaults(func=cmd_sweep)
    return parser


def _data_schema_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", default="y")
    p.add_argument("--task", default=None, choices=[None, "classification", "regression"])
    p.add_argument("--categorical", default="", help="comma-separated column names")
    p.add_argument("--ordered", default="", help="comma-separated column names")
    p.add_argument("--weight-col", default=None)


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True)
    _data_schema_flags(p)


def _forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--sampling", default="none",
                   choices=["none", "bootstrap", "patch", "subspace", "pasting"])
    p.add_argument("--alpha-s", type=float, default=1.0)
    p.add_argument("--alpha-f", type=float, default=1.0)
    p.add_argument("--aggregation", default=None,
                   choices=[None, "average", "soft_vote", "majority"])
    p.add_argument("--criterion", default=None, choices=[None, "gini", "entropy", "mse"])
    p.add_argument("--splitter", default="best",
                   choices=["best", "random-k", "ets", "pert", "trt-multiway"])
    p.add_argument("--k-features", type=int, default=None)
    p.add_argument("--min-samples-split", type=float, default=2)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-samples-leaf", type=float, default=1)
    p.add_argument("--min-weighted-decrease", type=float, default=0.0)
    p.add_argument("--max-leaf-nodes", type=int, default=None)
    p.add_argument("--order", default="depth_first", choices=["depth_first", "best_first"])
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=_default_seed())


def _schema_from_args(args) -> CsvSchema:
    kinds = {}
    for name in filter(None, args.categorical.split(",")):
        kinds[name.strip()] = "categorical"
    for name in filter(None, args.ordered.split(",")):
        kinds[name.strip()] = "ordered"
    return CsvSchema(target=args.target, task=args.task, kinds=kinds,
                     weight=args.weight_col)


def _forest_config(args) -> ForestConfig:
    if args.sampling == "none":
        sampling = Sampling("none")
    elif args.sampling == "bootstrap":
        sampling = Sampling("bootstrap")
    elif args.sampling == "subspace":
        sampling = Sampling("patch", 1.0, args.alpha_f)
    elif args.sampling == "pasting":
        sampling = Sampling("patch", args.alpha_s, 1.0)
    else:
        sampling = Sampling("patch", args.alpha_s, args.alpha_f)
    base = BuildConfig(
        criterion=args.criterion,
        splitter=args.splitter,
        k_features=args.k_features,
        min_samples_split=args.min_samples_split,
        max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf,
        min_weighted_decrease=args.min_weighted_decrease,
        max_leaf_nodes=args.max_leaf_nodes,
        order=args.order,
    )
    return ForestConfig(n_trees=args.trees, sampling=sampling, base=base,
                        aggregation=args.aggregation, seed=args.seed,
                        n_threads=args.threads)


def _write_manifest(out_path: str, command: str, config: dict, seed,
                    inputs: list, outputs: list, started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "library_version": __version__,
        "duration_seconds": time.time() - started,
    }
    Path(str(out_path) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def _emit_csv(rows, header, out_path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if out_path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(out_path).write_text(buf.getvalue(), encoding="utf-8")


def _load_dataset(path, schema) -> Dataset:
    try:
        return load_csv(path, schema)
    except FileNotFoundError as exc:
        raise DataError(f"data file not found: {path}") from exc


def _load_model(path) -> Forest:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise ModelFormatError(f"model file not found: {path}") from exc
    return deserialize_forest(data)


# ---------------------------------------------------------------------------
# Subcommands

def cmd_gen_data(args) -> int:
    started = time.time()
    if args.problem == "led":
        ds = gen_led(args.n, args.seed)
    elif args.problem == "friedman1":
        ds = gen_friedman1(args.n, args.p_total, args.noise_sd, args.seed)
    else:
        ds = gen_linear_gaussian(args.n, args.p_noise, args.seed)
    save_csv(ds, args.out)
    _write_manifest(args.out, "gen-data", {
        "problem": args.problem, "n": args.n, "p_total": args.p_total,
        "p_noise": args.p_noise, "noise_sd": args.noise_sd,
    }, args.seed, [], [args.out], started)
    return 0


def cmd_train(args) -> int:
    started = time.time()
    ds = _load_dataset(args.data, _schema_from_args(args))
    cfg = _forest_config(args)
    forest = fit(ds, cfg)
    Path(args.out).write_bytes(serialize_forest(forest))
    if cfg.sampling.mode != "none":
        err, coverage = oob_error(forest, ds)
        n_uncovered = int(np.count_nonzero(coverage == 0))
        print(f"oob_error: {err}", file=sys.stderr)
        if n_uncovered:
            print(f"oob_uncovered_samples: {n_uncovered}", file=sys.stderr)
    from dataclasses import asdict
    _write_manifest(args.out, "train",
                    {"data": args.data, "forest": asdict(cfg)},
                    args.seed, [args.data], [args.out], started)
    return 0


def cmd_predict(args) -> int:
    started = time.time()
    forest = _load_model(args.model)
    X, n_rows = _encode_prediction_matrix(forest, args.data)
    if forest.task == CLASSIFICATION:
        labels = forest.class_labels or [str(c) for c in range(forest.n_classes)]
        header = ["prediction"] + [f"p_{c}" for c in labels]
        rows = []
        if n_rows:
            probs, classes = predict_ensemble_batch(forest, X)
            for i in range(n_rows):
                rows.append([labels[classes[i]]] + [repr(float(v)) for v in probs[i]])
    else:
        header = ["prediction"]
        rows = []
        if n_rows:
            pred = predict_ensemble_batch(forest, X)
            rows = [[repr(float(v))] for v in pred]
    _emit_csv(rows, header, args.out)
    if args.out is not None:
        _write_manifest(args.out, "predict", {"model": args.model, "data": args.data},
                        None, [args.model, args.data], [args.out], started)
    return 0


def _encode_prediction_matrix(forest: Forest, path):
    """Align a feature CSV with the model's schema; label-encode categoricals."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: no rows") from None
            rows = list(reader)
    except FileNotFoundError as exc:
        raise DataError(f"data file not found: {path}") from exc
    names = forest.feature_names or [f"x{j + 1}" for j in range(forest.n_features)]
    missing = [n for n in names if n not in header]
    if missing:
        raise DataError(f"{path}: missing feature columns {missing}")
    col_of = {n: header.index(n) for n in names}
    X = np.zeros((len(rows), forest.n_features))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{path}: ragged row {i + 2}")
        for j, name in enumerate(names):
            token = row[col_of[name]]
            kind = forest.feature_kinds[j]
            if kind.is_categorical:
                labels = None
                if forest.feature_labels is not None:
                    labels = forest.feature_labels[j]
                if labels is not None:
                    if token not in labels:
                        raise DataError(f"{path}: unknown category {token!r} in column {name!r}")
                    X[i, j] = labels.index(token)
                else:
                    X[i, j] = int(token)
            else:
                try:
                    X[i, j] = float(token)
                except ValueError:
                    raise DataError(f"{path}: non-numeric value {token!r} in column {name!r}") from None
    return X, len(rows)


def _load_joint(args) -> DiscreteJoint:
    if args.joint is None:
        raise DataError("analytic methods need --joint (use 'led' or a JSON file)")
    if args.joint == "led":
        return led_joint()
    try:
        doc = json.loads(Path(args.joint).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"joint file not found: {args.joint}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"unparseable joint file: {exc}") from exc
    try:
        cards = tuple(int(c) for c in doc["cardinalities"])
        n_classes = int(doc["n_classes"])
        prob = np.asarray(doc["prob"], dtype=float).reshape(cards + (n_classes,))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed joint file: {exc}") from exc
    return DiscreteJoint(cards, n_classes, prob)


def cmd_importance(args) -> int:
    started = time.time()
    analytic = args.method.startswith("analytic")
    if analytic:
        if args.model is not None:
            raise argparse.ArgumentTypeError("analytic methods take --joint, not --model")
        joint = _load_joint(args)
        if args.method == "analytic-trt":
            report = analytic_mdi_trt(joint)
        elif args.method == "analytic-pruned":
            if args.depth is None:
                raise ValueError("analytic-pruned needs --depth")
            report = analytic_mdi_pruned(joint, args.depth)
        else:
            if args.subspace is None:
                raise ValueError("analytic-subspace needs --subspace")
            report = analytic_mdi_subspace(joint, args.subspace)
        names = [f"x{j + 1}" for j in range(joint.n_variables)]
    else:
        if args.model is None:
            raise ValueError(f"--method {args.method} needs --model")
        forest = _load_model(args.model)
        names = forest.feature_names or [f"x{j + 1}" for j in range(forest.n_features)]
        if args.method == "mdi":
            report = mdi(forest)
        else:
            if args.data is None:
                raise ValueError("permutation importance needs --data")
            ds = _load_dataset(args.data, _schema_from_args(args))
            report = permutation_importance(forest, ds, repeats=args.repeats,
                                            rng=np.random.default_rng(args.seed))
    if args.normalize:
        report = report.normalize()
    if args.decompose and report.by_degree is None:
        raise ValueError(f"--decompose is not available for method {args.method}")
    rows, header = _importance_rows(report, names, args.decompose)
    _emit_csv(rows, header, args.out)
    if args.out is not None:
        inputs = [p for p in (args.model, args.data, args.joint) if p]
        _write_manifest(args.out, "importance",
                        {"method": args.method, "depth": args.depth,
                         "subspace": args.subspace, "normalize": args.normalize,
                         "decompose": args.decompose, "repeats": args.repeats},
                        args.seed, inputs, [args.out], started)
    return 0


def _importance_rows(report: ImportanceReport, names, decompose: bool):
    if decompose:
        p = report.by_degree.shape[1]
        header = ["variable", "total"] + [f"k{k}" for k in range(p)]
        rows = [[names[j], repr(float(report.totals[j]))]
                + [repr(float(v)) for v in report.by_degree[j]]
                for j in range(len(names))]
    else:
        header = ["variable", "importance"]
        rows = [[names[j], repr(float(report.totals[j]))] for j in range(len(names))]
    return rows, header


def cmd_biasvar(args) -> int:
    started = time.time()
    if args.problem == "friedman1":
        problem = friedman1_problem(args.p_total, args.noise_sd)
    else:
        problem = linear_gaussian_problem(args.p_noise)
    cfg = _forest_config(args)
    report = bias_variance(problem, cfg, n_sets=args.sets, n_train=args.train_size,
                           n_test=args.test_size, seed=args.seed)
    rows = [["noise", repr(report.noise)],
            ["bias_sq", repr(report.bias_sq)],
            ["variance", repr(report.variance)],
            ["total", repr(report.total)],
            ["n_models", str(report.n_models)],
            ["n_replicates", str(report.n_replicates)]]
    _emit_csv(rows, ["component", "value"], args.out)
    if args.out is not None:
        _write_manifest(args.out, "biasvar", {"problem": args.problem, "sets": args.sets},
                        args.seed, [], [args.out], started)
    return 0


def cmd_depth_exp(args) -> int:
    started = time.time()
    report = depth_experiment(args.n, args.trees, args.seed)
    rows = [[str(args.n), str(args.trees), repr(report.mean_leaf_depth),
             repr(harmonic_depth(args.n))]]
    _emit_csv(rows, ["n", "trees", "mean_leaf_depth", "harmonic_law"], args.out)
    if args.out is not None:
        _write_manifest(args.out, "depth-exp", {"n": args.n, "trees": args.trees},
                        args.seed, [], [args.out], started)
    return 0


def cmd_mi_bias(args) -> int:
    started = time.time()
    report = mi_bias_check(args.card_x, args.card_y, args.node_size,
                           args.trials, args.seed)
    rows = [[str(args.card_x), str(args.card_y), str(args.node_size),
             str(args.trials), repr(report.mean_estimate), repr(report.expected)]]
    _emit_csv(rows, ["card_x", "card_y", "node_size", "trials",
                     "mean_estimate", "expected"], args.out)
    if args.out is not None:
        _write_manifest(args.out, "mi-bias",
                        {"card_x": args.card_x, "card_y": args.card_y,
                         "node_size": args.node_size, "trials": args.trials},
                        args.seed, [], [args.out], started)
    return 0


def cmd_sweep(args) -> int:
    started = time.time()
    grid = [int(v) for v in args.grid.split(",") if v]
    if not grid:
        raise ValueError("--grid must list at least one value")
    cfg = _forest_config(args)
    rows = scaling_sweep(args.axis, grid, cfg, n_train=args.train_size,
                         n_test=args.test_size, seed=args.seed)
    out_rows = [[r.axis, repr(r.value), repr(r.fit_seconds), repr(r.mean_depth),
                 repr(r.holdout_error)] for r in rows]
    _emit_csv(out_rows, ["axis", "value", "fit_seconds", "mean_depth",
                         "holdout_error"], args.out)
    if args.out is not None:
        _write_manifest(args.out, "sweep", {"axis": args.axis, "grid": grid},
                        args.seed, [], [args.out], started)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelFormatError as exc:
        print(f"patchwood: model error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"patchwood: data error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, SplitterError, CriterionError, argparse.ArgumentTypeError) as exc:
        print(f"patchwood: bad arguments: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
