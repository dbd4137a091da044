import csv
import json
import math

import numpy as np
import pytest

from conftest import reference_tree_doc
from patchwood.cli import main
from patchwood.dataset import CsvSchema, load_csv
from patchwood.forest import Forest, ForestConfig, serialize_forest
from patchwood.tree import tree_from_doc


def run(argv):
    return main([str(a) for a in argv])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def train_csv(tmp_path):
    # 30 unique-featured rows, two classes
    rng = np.random.default_rng(1)
    path = tmp_path / "train.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a", "b", "label"])
        for i in range(30):
            a = float(i)
            b = float(rng.normal())
            writer.writerow([a, b, "pos" if rng.random() < 0.5 else "neg"])
    return path


@pytest.fixture
def reference_model(tmp_path):
    tree = tree_from_doc(reference_tree_doc())
    forest = Forest(trees=[tree], feature_subsets=[None], inbag=[None],
                    config=ForestConfig(n_trees=1), task="classification",
                    n_features=2, n_classes=2, feature_kinds=tree.feature_kinds,
                    class_labels=["c1", "c2"], feature_names=["x1", "x2"],
                    feature_labels=None)
    path = tmp_path / "ref.pwforest"
    path.write_bytes(serialize_forest(forest))
    return path


class TestGenData:
    def test_writes_csv_and_manifest(self, tmp_path):
        out = tmp_path / "led.csv"
        assert run(["gen-data", "--problem", "led", "--n", 10, "--out", out]) == 0
        rows = read_rows(out)
        assert len(rows) == 11  # header + one row per digit
        manifest = json.loads((tmp_path / "led.csv.manifest.json").read_text())
        assert manifest["command"] == "gen-data"
        assert manifest["outputs"] == [str(out)]

    def test_generated_csv_loads_back(self, tmp_path):
        out = tmp_path / "f1.csv"
        run(["gen-data", "--problem", "friedman1", "--n", 50, "--seed", 3,
             "--out", out])
        ds = load_csv(out, CsvSchema(target="y", task="regression"))
        assert ds.n_samples == 50 and ds.n_features == 10


class TestTrain:
    def test_train_then_predict_memorizes_unique_rows(self, tmp_path, train_csv):
        model = tmp_path / "m.pwforest"
        code = run(["train", "--data", train_csv, "--target", "label",
                    "--trees", 5, "--seed", 7, "--out", model])
        assert code == 0
        pred_out = tmp_path / "pred.csv"
        assert run(["predict", "--model", model, "--data", train_csv,
                    "--out", pred_out]) == 0
        rows = read_rows(pred_out)
        truth = [r[2] for r in read_rows(train_csv)[1:]]
        predicted = [r[0] for r in rows[1:]]
        assert predicted == truth  # fully developed forest memorizes

    def test_zero_trees_exits_two(self, tmp_path, train_csv):
        code = run(["train", "--data", train_csv, "--target", "label",
                    "--trees", 0, "--out", tmp_path / "m.pwforest"])
        assert code == 2

    def test_missing_data_exits_three(self, tmp_path):
        code = run(["train", "--data", tmp_path / "absent.csv", "--target", "y",
                    "--out", tmp_path / "m.pwforest"])
        assert code == 3

    def test_reruns_are_byte_identical(self, tmp_path, train_csv):
        m1 = tmp_path / "m1.pwforest"
        m2 = tmp_path / "m2.pwforest"
        args = ["train", "--data", train_csv, "--target", "label", "--trees", 8,
                "--sampling", "bootstrap", "--splitter", "ets", "--k-features", 2,
                "--seed", 42]
        assert run(args + ["--out", m1]) == 0
        assert run(args + ["--out", m2]) == 0
        assert m1.read_bytes() == m2.read_bytes()

    def test_bootstrap_training_reports_oob(self, tmp_path, train_csv, capsys):
        model = tmp_path / "m.pwforest"
        code = run(["train", "--data", train_csv, "--target", "label",
                    "--trees", 20, "--sampling", "bootstrap", "--seed", 3,
                    "--out", model])
        assert code == 0
        assert "oob_error:" in capsys.readouterr().err

    def test_thread_flag_does_not_change_output(self, tmp_path, train_csv):
        m1 = tmp_path / "t1.pwforest"
        m2 = tmp_path / "t8.pwforest"
        args = ["train", "--data", train_csv, "--target", "label", "--trees", 6,
                "--sampling", "bootstrap", "--seed", 5]
        run(args + ["--threads", 1, "--out", m1])
        run(args + ["--threads", 8, "--out", m2])
        assert m1.read_bytes() == m2.read_bytes()


class TestPredict:
    def test_reference_model_routes_left(self, tmp_path, reference_model):
        data = tmp_path / "points.csv"
        data.write_text("x1,x2\n0.5,0.2\n0.1,0.9\n")
        out = tmp_path / "pred.csv"
        assert run(["predict", "--model", reference_model, "--data", data,
                    "--out", out]) == 0
        rows = read_rows(out)
        assert rows[0] == ["prediction", "p_c1", "p_c2"]
        assert rows[1][0] == "c1"
        assert float(rows[1][1]) == 1.0 and float(rows[1][2]) == 0.0

    def test_probabilities_sum_to_one(self, tmp_path, reference_model):
        data = tmp_path / "points.csv"
        rng = np.random.default_rng(2)
        with open(data, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2"])
            for _ in range(25):
                w.writerow([rng.random(), rng.random()])
        out = tmp_path / "pred.csv"
        run(["predict", "--model", reference_model, "--data", data, "--out", out])
        for row in read_rows(out)[1:]:
            assert math.isclose(float(row[1]) + float(row[2]), 1.0, abs_tol=1e-9)

    def test_empty_input_yields_header_only(self, tmp_path, reference_model):
        data = tmp_path / "empty.csv"
        data.write_text("x1,x2\n")
        out = tmp_path / "pred.csv"
        assert run(["predict", "--model", reference_model, "--data", data,
                    "--out", out]) == 0
        assert read_rows(out) == [["prediction", "p_c1", "p_c2"]]

    def test_schema_mismatch_exits_three(self, tmp_path, reference_model):
        data = tmp_path / "bad.csv"
        data.write_text("wrong,cols\n1,2\n")
        assert run(["predict", "--model", reference_model, "--data", data]) == 3

    def test_corrupt_model_exits_four(self, tmp_path):
        bad = tmp_path / "bad.pwforest"
        bad.write_bytes(b"{not a model")
        data = tmp_path / "d.csv"
        data.write_text("x1,x2\n1,2\n")
        assert run(["predict", "--model", bad, "--data", data]) == 4


class TestImportance:
    def test_analytic_trt_on_bundled_led(self, tmp_path):
        out = tmp_path / "imp.csv"
        assert run(["importance", "--method", "analytic-trt", "--joint", "led",
                    "--out", out]) == 0
        rows = read_rows(out)
        values = {r[0]: float(r[1]) for r in rows[1:]}
        expected = dict(zip([f"x{j}" for j in range(1, 8)],
                            [0.412, 0.581, 0.531, 0.542, 0.656, 0.225, 0.372]))
        for name, v in expected.items():
            assert abs(values[name] - v) < 1e-3

    def test_decompose_rows_sum_to_totals(self, tmp_path):
        out = tmp_path / "imp.csv"
        run(["importance", "--method", "analytic-trt", "--joint", "led",
             "--decompose", "--out", out])
        for row in read_rows(out)[1:]:
            total = float(row[1])
            degree_sum = sum(float(v) for v in row[2:])
            assert math.isclose(total, degree_sum, abs_tol=1e-9)

    def test_normalized_totals_sum_to_one(self, tmp_path):
        out = tmp_path / "imp.csv"
        run(["importance", "--method", "analytic-trt", "--joint", "led",
             "--normalize", "--out", out])
        total = sum(float(r[1]) for r in read_rows(out)[1:])
        assert math.isclose(total, 1.0, abs_tol=1e-9)

    def test_method_input_mismatch_exits_two(self, tmp_path, reference_model):
        assert run(["importance", "--method", "analytic-trt",
                    "--model", reference_model]) == 2
        assert run(["importance", "--method", "mdi"]) == 2
        assert run(["importance", "--method", "analytic-pruned", "--joint", "led"]) == 2

    def test_mdi_from_model(self, tmp_path, reference_model):
        out = tmp_path / "imp.csv"
        assert run(["importance", "--method", "mdi", "--model", reference_model,
                    "--out", out]) == 0
        rows = read_rows(out)
        assert [r[0] for r in rows[1:]] == ["x1", "x2"]
        assert all(float(r[1]) >= 0 for r in rows[1:])

    def test_permutation_importance_end_to_end(self, tmp_path, train_csv):
        model = tmp_path / "m.pwforest"
        run(["train", "--data", train_csv, "--target", "label", "--trees", 15,
             "--sampling", "bootstrap", "--seed", 6, "--out", model])
        out = tmp_path / "imp.csv"
        assert run(["importance", "--method", "permutation", "--model", model,
                    "--data", train_csv, "--target", "label", "--repeats", 2,
                    "--seed", 1, "--out", out]) == 0
        rows = read_rows(out)
        assert len(rows) == 3  # header + two features
        # permutation importances carry no degree decomposition
        assert run(["importance", "--method", "permutation", "--model", model,
                    "--data", train_csv, "--target", "label", "--decompose"]) == 2

    def test_joint_file_input(self, tmp_path):
        joint_path = tmp_path / "joint.json"
        prob = np.zeros((2, 2, 2))
        for a in range(2):
            for b in range(2):
                prob[a, b, a ^ b] = 0.25  # XOR
        joint_path.write_text(json.dumps({
            "cardinalities": [2, 2], "n_classes": 2,
            "prob": prob.ravel().tolist()}))
        out = tmp_path / "imp.csv"
        assert run(["importance", "--method", "analytic-trt", "--joint",
                    joint_path, "--out", out]) == 0
        values = [float(r[1]) for r in read_rows(out)[1:]]
        # each variable is informative only jointly: Imp = I(X;Y|other)/2 = 0.5
        assert values == pytest.approx([0.5, 0.5], abs=1e-12)


class TestAnalysisCommands:
    def test_depth_exp(self, tmp_path):
        out = tmp_path / "depth.csv"
        assert run(["depth-exp", "--n", 200, "--trees", 100, "--seed", 1,
                    "--out", out]) == 0
        rows = read_rows(out)
        measured, law = float(rows[1][2]), float(rows[1][3])
        assert abs(measured - law) / law < 0.1

    def test_mi_bias(self, tmp_path):
        out = tmp_path / "mi.csv"
        assert run(["mi-bias", "--card-x", 2, "--card-y", 2, "--node-size", 100,
                    "--trials", 500, "--seed", 2, "--out", out]) == 0
        rows = read_rows(out)
        assert float(rows[1][5]) == pytest.approx(0.00721, abs=2e-5)

    def test_biasvar(self, tmp_path):
        out = tmp_path / "bv.csv"
        assert run(["biasvar", "--problem", "linear-gaussian", "--sets", 10,
                    "--train-size", 30, "--test-size", 50, "--trees", 3,
                    "--splitter", "ets", "--k-features", 3, "--seed", 3,
                    "--out", out]) == 0
        values = {r[0]: float(r[1]) for r in read_rows(out)[1:]}
        assert values["noise"] == 0.0
        assert values["total"] > 0

    def test_sweep(self, tmp_path):
        out = tmp_path / "sweep.csv"
        assert run(["sweep", "--axis", "M", "--grid", "2,4", "--train-size", 60,
                    "--test-size", 50, "--splitter", "ets", "--k-features", 3,
                    "--seed", 4, "--out", out]) == 0
        rows = read_rows(out)
        assert len(rows) == 3
        assert rows[0] == ["axis", "value", "fit_seconds", "mean_depth",
                           "holdout_error"]

    def test_env_seed_default(self, tmp_path, monkeypatch, train_csv):
        monkeypatch.setenv("PATCHWOOD_SEED", "99")
        m1 = tmp_path / "env.pwforest"
        run(["train", "--data", train_csv, "--target", "label", "--trees", 3,
             "--sampling", "bootstrap", "--out", m1])
        m2 = tmp_path / "explicit.pwforest"
        run(["train", "--data", train_csv, "--target", "label", "--trees", 3,
             "--sampling", "bootstrap", "--seed", 99, "--out", m2])
        assert m1.read_bytes() == m2.read_bytes()
